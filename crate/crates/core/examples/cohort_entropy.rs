//! Loads a cohort (a CSV path argument, or a synthetic one) and bins claims
//! by how much participants disagreed on them.
//!
//! cargo run --example cohort_entropy -- [cohort.csv pandora|mist1|mist2]

use std::collections::BTreeMap;
use std::path::Path;

use susceptsim::cohort::{Cohort, DatasetKind};
use susceptsim::synth::{self, CohortSpec};

fn main() -> susceptsim::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cohort = match args.as_slice() {
        [path, kind] => {
            let kind = match kind.as_str() {
                "mist1" => DatasetKind::Mist1,
                "mist2" => DatasetKind::Mist2,
                _ => DatasetKind::Pandora,
            };
            Cohort::load(Path::new(path), kind)?
        }
        _ => synth::cohort(&CohortSpec {
            middle_age_share: 0.2,
            ..CohortSpec::default()
        })?,
    };

    let r = cohort.report();
    println!(
        "{:?}: {} participants, {} claims; {} raw judgments, {} held for evaluation, {} observed",
        cohort.kind(),
        cohort.n_participants(),
        cohort.n_claims(),
        r.raw_judgments,
        r.evaluation_judgments,
        r.observed_entries
    );
    println!("axes: {:?}; middle-age exclusions: {}", cohort.available_axes(), r.age_middle_band_excluded);
    for w in &r.warnings {
        println!("warning: {w}");
    }

    let entropies = cohort.claim_entropies();
    let bins = cohort.entropy_bins();
    let mut by_bin: BTreeMap<_, Vec<&str>> = BTreeMap::new();
    for (id, bin) in &bins {
        by_bin.entry(*bin).or_default().push(id);
    }
    for (bin, ids) in by_bin {
        let mean = ids.iter().map(|id| entropies[*id]).sum::<f64>() / ids.len() as f64;
        println!("{bin:<4} {:>3} claims, mean entropy {mean:.3} bits", ids.len());
    }
    Ok(())
}
