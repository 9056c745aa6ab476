//! End-to-end run over synthetic fixtures and the mock backend, printing the
//! generated summary.
//!
//! cargo run --example full_report -- [output dir]

use std::path::PathBuf;

use susceptsim::config::RunConfig;
use susceptsim::pipeline::{gateways, run_all, RunOptions, Workspace};
use susceptsim::synth::{write_fixtures, FixtureSpec};

fn main() -> susceptsim::Result<()> {
    env_logger::init();
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("susceptsim-full-report"));
    let config_path = write_fixtures(&dir, &FixtureSpec::default())?;
    let ws = Workspace::load(RunConfig::load(&config_path)?)?;
    let gws = gateways(&ws.config, true)?;
    let manifest = run_all(&ws, &gws, RunOptions::default())?;
    let report = ws.layout().report_dir();
    println!("{}", std::fs::read_to_string(report.join("summary.md")).expect("summary written"));
    println!("{} manifest entries, files in {}", manifest.entries.len(), report.display());
    Ok(())
}
