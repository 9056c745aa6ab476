//! Renders the same participant and claim under every primary setting.

use susceptsim::demographics::Axis;
use susceptsim::prompt::{enumerate_conditions, render_prompt, PromptContext};
use susceptsim::synth::{self, CohortSpec};

fn main() -> susceptsim::Result<()> {
    let store = synth::belief_store(1, 0.4)?;
    let cohort = synth::cohort(&CohortSpec::default())?;
    let ctx = PromptContext { store: &store, cohort: &cohort };
    let participant = cohort.participants().next().expect("non-empty cohort");
    let judgment = cohort
        .evaluation()
        .iter()
        .find(|j| j.pid == participant.pid)
        .expect("participant has evaluation judgments");
    let claim = cohort.claim(&judgment.claim_id).expect("claim exists");

    for setting in enumerate_conditions().into_iter().filter(|s| !s.appendix) {
        // Best-of settings hold one run per dimension; the first is enough here.
        let spec = &setting.runs[0];
        let p = render_prompt(ctx, participant, claim, spec, Axis::Gender)?;
        let system = if p.system_text.len() > 240 {
            format!("{}... ({} chars)", &p.system_text[..240], p.system_text.len())
        } else {
            p.system_text.clone()
        };
        println!("== {} [{}]", setting.name, &p.condition_fingerprint[..12]);
        println!("system: {}", if system.is_empty() { "<none>" } else { &system });
        println!("user:   {}\n", p.user_text);
    }
    Ok(())
}
