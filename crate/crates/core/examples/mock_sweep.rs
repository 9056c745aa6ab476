//! A small grid sweep against the offline backend, scored per condition.

use std::sync::Arc;

use susceptsim::demographics::Axis;
use susceptsim::gateway::{Gateway, MockBackend, ModelEndpoint};
use susceptsim::prompt::{BeliefSource, ConditionSpec};
use susceptsim::sim::{run_sweep, susceptibility_alignment, veracity_accuracy, SweepPlan};
use susceptsim::synth::{self, CohortSpec};

fn main() -> susceptsim::Result<()> {
    let store = synth::belief_store(1, 0.4)?;
    let cohort = synth::cohort(&CohortSpec::default())?;
    let gateway = Gateway::new(
        ModelEndpoint::new("mock-hash", "mock://"),
        Arc::new(MockBackend::hashing(11)),
    )?;
    let conditions = vec![
        ConditionSpec::zero_shot(),
        ConditionSpec::demo_only(),
        ConditionSpec::with_beliefs(BeliefSource::Imputed, true),
        ConditionSpec::with_beliefs(BeliefSource::Observed, false),
    ];
    let plan = SweepPlan {
        conditions: conditions.clone(),
        axes: vec![Axis::Gender],
        runs: 2,
        ..SweepPlan::default()
    };
    let out = run_sweep(&store, &cohort, &[gateway], &plan)?;
    println!("{} records, {} failures", out.records.len(), out.failures.len());
    for c in &conditions {
        let fp = c.fingerprint();
        let rs: Vec<_> = out.records.iter().filter(|r| r.condition_fingerprint == fp).collect();
        let align = susceptibility_alignment(rs.iter().copied(), &cohort)?;
        let truth = veracity_accuracy(rs.iter().copied(), &cohort)?;
        println!(
            "{:<24} alignment {:.3} (runs {:?}), veracity {:.3}",
            c.label(),
            align.accuracy.unwrap_or(f64::NAN),
            align.per_run.values().map(|a| format!("{a:.3}")).collect::<Vec<_>>(),
            truth.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
