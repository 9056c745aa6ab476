//! Seeded synthetic belief stores and cohorts for offline runs and tests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::belief_store::{shipped_taxonomy, BeliefStore, ResponseDistribution};
use crate::cohort::{
    Claim, ClaimJudgment, Cohort, CohortConfig, DatasetKind, Label, RawDemographics,
};
use crate::demographics::{Axis, DemographicProfile, Group};
use crate::config::{
    AdapterConfig, DatasetConfig, GridConfig, PanelToggles, RunConfig, Seeds, SurveyConfig,
    ThematicConfig, CONFIG_VERSION,
};
use crate::error::{Error, Result};
use crate::gateway::ModelEndpoint;
use crate::pipeline::dataset_tag;

/// Group distributions over the bundled taxonomy.
///
/// Each question gets a shared base draw per axis; each group then mixes in
/// its own draw with weight `group_shift`, so larger shifts mean larger
/// between-group divergence.
pub fn belief_store(seed: u64, group_shift: f64) -> Result<BeliefStore> {
    let mut store = BeliefStore::from_questions(shipped_taxonomy())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(1.0, 1.0).expect("valid gamma");
    let draw = |k: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let v: Vec<f64> = (0..k).map(|_| gamma.sample(rng) + 1e-3).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    };
    let questions: Vec<_> = store.questions().to_vec();
    for q in &questions {
        for axis in Axis::ALL {
            let base = draw(q.scale_size, &mut rng);
            for g in axis.groups() {
                let own = draw(q.scale_size, &mut rng);
                let probs: Vec<f64> = base
                    .iter()
                    .zip(&own)
                    .map(|(b, o)| (1.0 - group_shift) * b + group_shift * o)
                    .collect();
                let n = rng.random_range(200..2000);
                let s: f64 = probs.iter().sum();
                let probs = probs.into_iter().map(|p| p / s).collect();
                store.insert_distribution(ResponseDistribution::new(
                    q.qid.clone(),
                    DemographicProfile::of(g),
                    probs,
                    n,
                )?)?;
            }
        }
    }
    Ok(store)
}

const TOPICS: [(&str, [&str; 6]); 5] = [
    ("health", ["vaccine", "doctors", "hospital", "virus", "diet", "medicine"]),
    ("politics", ["election", "senator", "ballot", "parliament", "voters", "campaign"]),
    ("climate", ["warming", "emissions", "glaciers", "carbon", "drought", "ocean"]),
    ("technology", ["smartphone", "network", "satellite", "software", "robots", "internet"]),
    ("finance", ["bank", "inflation", "taxes", "currency", "savings", "market"]),
];

const FRAMES: [&str; 6] = [
    "Officials confirm that {a} affects {b} across the country",
    "New report claims {a} secretly controls {b}",
    "Study finds {a} linked to changes in {b}",
    "Experts warn that {a} will replace {b} within a year",
    "Leaked memo reveals {a} was used to hide {b}",
    "Survey shows most people trust {a} over {b}",
];

#[derive(Debug, Clone)]
pub struct CohortSpec {
    pub kind: DatasetKind,
    pub n_participants: usize,
    pub n_claims: usize,
    pub seed: u64,
    /// Share of participants whose age falls in the excluded middle band.
    pub middle_age_share: f64,
    /// How much participants agree with gold; 0.5 is coin flipping.
    pub base_accuracy: f64,
    pub cohort: CohortConfig,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Pandora,
            n_participants: 40,
            n_claims: 12,
            seed: 7,
            middle_age_share: 0.0,
            base_accuracy: 0.7,
            cohort: CohortConfig::default(),
        }
    }
}

/// Topic tag of a synthetic claim text, if it came from [`cohort`].
pub fn claim_topic(text: &str) -> Option<&'static str> {
    let lower = text.to_lowercase();
    TOPICS
        .iter()
        .find(|(_, words)| words.iter().any(|w| lower.contains(w)))
        .map(|(t, _)| *t)
}

/// A synthetic cohort where every participant judges every claim.
///
/// Claims carry a difficulty drawn per claim, so agreement (and hence
/// entropy) varies across claims.
pub fn cohort(spec: &CohortSpec) -> Result<Cohort> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut claims = Vec::new();
    let mut difficulty = Vec::new();
    for i in 0..spec.n_claims {
        let (_, words) = TOPICS[i % TOPICS.len()];
        let frame = FRAMES[rng.random_range(0..FRAMES.len())];
        let a = words[rng.random_range(0..words.len())];
        let b = words[rng.random_range(0..words.len())];
        claims.push(Claim {
            claim_id: format!("c{:03}", i + 1),
            text: frame.replace("{a}", a).replace("{b}", b) + ".",
            gold_label: if rng.random_bool(0.5) { Label::True } else { Label::Fake },
            source_dataset: spec.kind,
        });
        difficulty.push(rng.random_range(-0.45..0.25));
    }

    let axes = spec.kind.expected_axes();
    let mut demos = BTreeMap::new();
    let mut judgments = Vec::new();
    for p in 0..spec.n_participants {
        let pid = format!("p{:03}", p + 1);
        let mut raw = RawDemographics::default();
        for &axis in &Axis::ALL {
            let g = if !axes.contains(&axis) {
                None
            } else if axis == Axis::Age && rng.random_bool(spec.middle_age_share) {
                raw.age_excluded = true;
                None
            } else {
                let [a, b] = axis.groups();
                Some(if rng.random_bool(0.5) { a } else { b })
            };
            raw.cells.insert(axis, g);
        }
        // older and non-completed-HS participants lean slightly more credulous
        let mut skill = spec.base_accuracy + rng.random_range(-0.1..0.1);
        if raw.cells.get(&Axis::Age) == Some(&Some(Group::Older)) {
            skill -= 0.05;
        }
        if raw.cells.get(&Axis::Education) == Some(&Some(Group::NotCompletedHs)) {
            skill -= 0.05;
        }
        for (c, d) in claims.iter().zip(&difficulty) {
            let p_correct = (skill + d).clamp(0.02, 0.98);
            let choice = if rng.random_bool(p_correct) {
                c.gold_label
            } else {
                c.gold_label.flipped()
            };
            judgments.push(ClaimJudgment {
                pid: pid.clone(),
                claim_id: c.claim_id.clone(),
                participant_choice: choice,
                gold_label: c.gold_label,
            });
        }
        demos.insert(pid, raw);
    }
    Cohort::build(spec.kind, claims, demos, judgments, &spec.cohort)
}

/// Everything [`write_fixtures`] lays down.
#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub store_seed: u64,
    pub group_shift: f64,
    pub datasets: Vec<CohortSpec>,
    pub models: Vec<String>,
    /// Setting names; empty selects every primary setting.
    pub settings: Vec<String>,
    pub axes: Vec<Axis>,
    pub runs: u32,
    pub seeds: Seeds,
    pub topics: usize,
    pub adapter_epochs: usize,
    /// Balance tolerance for the shortcut panel; small cohorts need a wider one.
    pub panel_epsilon: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            store_seed: 1,
            group_shift: 0.4,
            datasets: vec![
                CohortSpec {
                    n_participants: 24,
                    n_claims: 10,
                    ..CohortSpec::default()
                },
                CohortSpec {
                    kind: DatasetKind::Mist2,
                    n_participants: 24,
                    n_claims: 10,
                    seed: 8,
                    ..CohortSpec::default()
                },
            ],
            models: vec!["mock-small".into()],
            settings: vec![
                "zero_shot".into(),
                "demo_only".into(),
                "imputed+demo".into(),
                "observed+demo".into(),
            ],
            axes: vec![Axis::Gender, Axis::Age],
            runs: 2,
            seeds: Seeds {
                sweep: 0,
                dropout: 1,
                training: 2,
                topics: 3,
            },
            topics: 5,
            adapter_epochs: 4,
            panel_epsilon: 0.2,
        }
    }
}

/// Writes survey distributions, one cohort CSV per dataset and `run.toml`
/// into `dir`; returns the config path. Endpoints are meant for `--mock`.
pub fn write_fixtures(dir: &Path, spec: &FixtureSpec) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    belief_store(spec.store_seed, spec.group_shift)?
        .write_distributions(&dir.join("wvs_distributions.jsonl"))?;
    let mut datasets = Vec::new();
    for d in &spec.datasets {
        let name = format!("{}.csv", dataset_tag(d.kind));
        cohort(d)?.write_csv(&dir.join(&name))?;
        datasets.push(DatasetConfig {
            kind: d.kind,
            cohort: name.into(),
        });
    }
    let mut adapter = AdapterConfig::default();
    adapter.phase1.epochs = spec.adapter_epochs;
    adapter.phase2.epochs = spec.adapter_epochs;
    let config = RunConfig {
        version: CONFIG_VERSION,
        output_dir: "out".into(),
        cache_dir: "out/cache".into(),
        seeds: spec.seeds,
        survey: SurveyConfig {
            taxonomy: None,
            distributions: "wvs_distributions.jsonl".into(),
        },
        datasets,
        endpoints: spec
            .models
            .iter()
            .map(|m| ModelEndpoint::new(m, "mock://"))
            .collect(),
        grid: GridConfig {
            settings: spec.settings.clone(),
            axes: spec.axes.clone(),
            runs: spec.runs,
            ..GridConfig::default()
        },
        panels: PanelToggles {
            epsilon: spec.panel_epsilon,
            ..PanelToggles::default()
        },
        adapter,
        thematic: ThematicConfig {
            topics: spec.topics,
            iterations: 200,
        },
    };
    let path = dir.join("run.toml");
    std::fs::write(&path, config.to_toml()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
