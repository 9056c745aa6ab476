//! Counterfactual swaps against two contrasting mocks: one that ignores the
//! persona entirely and one that answers from the demographic phrase alone.

use std::sync::Arc;

use susceptsim::counterfactual::{
    build_balanced_slice, complementarity_panel, shortcut_panel, utility_panel, PanelConfig,
};
use susceptsim::demographics::{Axis, Group};
use susceptsim::gateway::{Gateway, MockBackend, ModelEndpoint};
use susceptsim::prompt::ConditionSpec;
use susceptsim::synth::{self, CohortSpec};

fn main() -> susceptsim::Result<()> {
    let store = synth::belief_store(1, 0.4)?;
    let cohort = synth::cohort(&CohortSpec::default())?;
    let axis = Axis::Gender;
    let cfg = PanelConfig {
        epsilon: 0.15,
        ..PanelConfig::default()
    };

    let slice = build_balanced_slice(&cohort, axis, cfg.epsilon, cfg.min_n)?;
    println!(
        "balanced slice: {} of {} claims within {}",
        slice.claims.len(),
        slice.candidates.len(),
        cfg.epsilon
    );

    let mocks = [
        ("blind", MockBackend::demographics_blind(5)),
        ("keyed", MockBackend::keyed_on(Group::Female.phrase(), "true", "fake")),
    ];
    for (name, backend) in mocks {
        let gw = Gateway::new(ModelEndpoint::new(name, "mock://"), Arc::new(backend))?;
        let u = utility_panel(&store, &cohort, axis, &gw, &ConditionSpec::demo_only(), &cfg)?;
        let s = shortcut_panel(&store, &cohort, axis, &gw, &cfg)?;
        let c = complementarity_panel(&store, &cohort, axis, &gw, &cfg)?;
        let pct = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.1}%"));
        println!(
            "{name:<6} utility flip {} | shortcut flip {} | complementarity flip {}, accuracy delta {:+.3}",
            pct(u.flip_rate),
            pct(s.flip_rate),
            pct(c.panel.flip_rate),
            c.panel.accuracy_delta.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
