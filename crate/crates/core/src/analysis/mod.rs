//! Thematic topic modelling and significance tests.

pub mod stats;
pub mod thematic;

pub use stats::{paired_t_test, two_proportion_z_test, Degenerate, TestOutcome};
pub use thematic::{
    nmf, nmf_topics, tfidf, tokenize, topic_demographic_gaps, NmfFit, Tfidf, TopicGap, TopicModel,
    MIN_TOPIC_SUPPORT, MONOTONICITY_TOLERANCE,
};
