//! Group-conditioned survey priors: how far apart the two groups of each
//! axis sit, and what a single question looks like for both.

use susceptsim::belief_store::BeliefDimension;
use susceptsim::demographics::Axis;
use susceptsim::divergence::{entropy_bits, js_divergence_bits, kl_divergence};
use susceptsim::synth;

fn main() -> susceptsim::Result<()> {
    let store = synth::belief_store(1, 0.4)?;
    println!(
        "{} questions over {} dimensions, {} distributions",
        store.n_questions(),
        store.dimensions().len(),
        store.n_distributions()
    );
    for d in BeliefDimension::ALL {
        let n = store.questions().iter().filter(|q| q.dimension == d).count();
        println!("  {:<28} {n}", d.label());
    }

    for axis in Axis::ALL {
        let div = store.axis_divergence(axis)?;
        println!(
            "{axis}: mean JS {:.4} bits, modal answers differ on {:.1}% of questions",
            div.mean_js_bits, div.modal_disagreement
        );
    }

    let q = store.questions_sorted()[0];
    let [a, b] = Axis::Age.groups();
    let (pa, pb) = (
        store.distribution(&q.qid, a).expect("synthetic store is complete"),
        store.distribution(&q.qid, b).expect("synthetic store is complete"),
    );
    println!("\n{} ({}): {}", q.qid, q.dimension.label(), q.text);
    for (g, d) in [(a, pa), (b, pb)] {
        let ps: Vec<String> = d.probs.iter().map(|p| format!("{p:.2}")).collect();
        println!("  {g:<8} [{}] modal {} entropy {:.3} bits", ps.join(" "), d.modal_response(), entropy_bits(&d.probs));
    }
    println!(
        "  KL({a}||{b}) = {:.4} nats, JS = {:.4} bits",
        kl_divergence(&pa.probs, &pb.probs)?,
        js_divergence_bits(&pa.probs, &pb.probs)?
    );
    Ok(())
}
