//! Topics over claim texts and the per-topic alignment gap between groups.

use std::sync::Arc;

use susceptsim::analysis::{nmf_topics, topic_demographic_gaps};
use susceptsim::demographics::Axis;
use susceptsim::gateway::{Gateway, MockBackend, ModelEndpoint};
use susceptsim::prompt::ConditionSpec;
use susceptsim::sim::{run_sweep, SweepPlan};
use susceptsim::synth::{self, CohortSpec};

fn main() -> susceptsim::Result<()> {
    let store = synth::belief_store(1, 0.4)?;
    let cohort = synth::cohort(&CohortSpec {
        n_claims: 20,
        ..CohortSpec::default()
    })?;
    let claims: Vec<_> = cohort.claims().collect();
    let model = nmf_topics(&claims, 4, 300, 3)?;
    println!(
        "reconstruction error {:.4} -> {:.4} over {} iterations",
        model.errors[0],
        model.final_error(),
        model.errors.len() - 1
    );
    for t in 0..model.k {
        let terms: Vec<String> = model.top_terms(t, 6).iter().map(|(w, _)| w.to_string()).collect();
        let n = model.assignments.iter().filter(|a| **a == t).count();
        println!("topic {t}: {n} claims; {}", terms.join(", "));
    }

    let gw = Gateway::new(ModelEndpoint::new("mock-hash", "mock://"), Arc::new(MockBackend::hashing(2)))?;
    let axes = [Axis::Gender, Axis::Age];
    let plan = SweepPlan {
        conditions: vec![ConditionSpec::demo_only()],
        axes: axes.to_vec(),
        runs: 2,
        ..SweepPlan::default()
    };
    let records = run_sweep(&store, &cohort, &[gw], &plan)?.records;
    for gap in topic_demographic_gaps(&model, &records, &cohort, &axes)? {
        println!(
            "topic {} {}: {} - {} = {} ppts (n {:?}){}",
            gap.topic,
            gap.axis,
            gap.groups[0],
            gap.groups[1],
            gap.gap_ppts.map_or("-".into(), |g| format!("{g:+.1}")),
            gap.n,
            if gap.low_support { " low support" } else { "" }
        );
    }
    Ok(())
}
