//! Writes a synthetic survey file, cohort CSVs and a run configuration that
//! the `susceptsim` binary accepts with `--mock`.
//!
//! cargo run --example make_fixtures -- <dir> [participants] [claims]

use std::path::PathBuf;

use susceptsim::synth::{write_fixtures, FixtureSpec};

fn main() -> susceptsim::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixtures".into()));
    let participants: Option<usize> = args.next().and_then(|a| a.parse().ok());
    let claims: Option<usize> = args.next().and_then(|a| a.parse().ok());
    let mut spec = FixtureSpec::default();
    for d in &mut spec.datasets {
        d.n_participants = participants.unwrap_or(d.n_participants);
        d.n_claims = claims.unwrap_or(d.n_claims);
    }
    let config = write_fixtures(&dir, &spec)?;
    println!("{}", config.display());
    println!("try: susceptsim --config {} --mock sweep", config.display());
    Ok(())
}
