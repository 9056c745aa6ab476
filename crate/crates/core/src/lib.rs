pub mod adapter;
pub mod analysis;
pub mod belief_store;
pub mod cohort;
pub mod config;
pub mod counterfactual;
pub mod demographics;
pub mod divergence;
pub mod error;

pub use error::{Error, Result};
pub mod gateway;
pub mod pipeline;
pub mod prompt;
pub mod report;
pub mod sim;
pub mod synth;
