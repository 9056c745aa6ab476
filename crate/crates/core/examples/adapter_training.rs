//! Fits the belief adapter on survey distributions, then per-axis
//! susceptibility heads, and prints learning curves and perturbation results.
//!
//! cargo run --example adapter_training -- [work dir]

use std::path::PathBuf;

use susceptsim::config::RunConfig;
use susceptsim::pipeline::{
    dataset_tag, gateways, run_adapter_stage, run_head_stage, Embedder, Workspace,
};
use susceptsim::synth::{write_fixtures, FixtureSpec};

fn main() -> susceptsim::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("susceptsim-adapter"));
    let spec = FixtureSpec {
        adapter_epochs: 8,
        ..FixtureSpec::default()
    };
    let ws = Workspace::load(RunConfig::load(&write_fixtures(&dir, &spec)?)?)?;
    let gws = gateways(&ws.config, true)?;
    let mut embedder = Embedder::for_workspace(&ws, &gws)?;

    let (outcome, summary) = run_adapter_stage(&ws, &mut embedder)?;
    println!(
        "phase 1: {} train / {} validation questions, {} steps, embeddings from {}",
        summary.n_train_questions, summary.n_val_questions, summary.steps, summary.embed_source
    );
    for (epoch, (t, v)) in summary.train_curve.iter().zip(&summary.val_curve).enumerate() {
        println!("  epoch {epoch}: train KL {t:.4}, validation KL {v:.4}");
    }

    for (kind, rows) in run_head_stage(&ws, &outcome.adapter, &mut embedder)? {
        for r in rows {
            if let Some(why) = &r.skipped {
                println!("{} {}: skipped ({why})", dataset_tag(kind), r.axis);
                continue;
            }
            println!(
                "{} {}: train acc {:.3}, val acc {:.3}, zero-out flips {:.3}, swap flips {:.3}",
                dataset_tag(kind),
                r.axis,
                r.train_accuracy.unwrap_or(f64::NAN),
                r.val_accuracy.unwrap_or(f64::NAN),
                r.zero_out.as_ref().map_or(f64::NAN, |m| m.flip_rate),
                r.swap.as_ref().map_or(f64::NAN, |m| m.flip_rate),
            );
        }
    }
    Ok(())
}
