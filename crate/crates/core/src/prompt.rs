//! Persona prompt rendering and the experimental condition grid.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::belief_store::{BeliefDimension, BeliefStore, SurveyQuestion};
use crate::cohort::{Claim, Cohort, Participant};
use crate::demographics::Axis;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BeliefSource {
    None,
    Imputed,
    Observed,
    ImputedPlusObserved,
}

impl BeliefSource {
    pub fn uses_imputed(self) -> bool {
        matches!(self, BeliefSource::Imputed | BeliefSource::ImputedPlusObserved)
    }

    pub fn uses_observed(self) -> bool {
        matches!(self, BeliefSource::Observed | BeliefSource::ImputedPlusObserved)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BeliefEncoding {
    Modal,
    Distribution,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionSelection {
    All,
    Only(BTreeSet<BeliefDimension>),
}

impl DimensionSelection {
    pub fn single(d: BeliefDimension) -> Self {
        DimensionSelection::Only(BTreeSet::from([d]))
    }

    pub fn contains(&self, d: BeliefDimension) -> bool {
        match self {
            DimensionSelection::All => true,
            DimensionSelection::Only(set) => set.contains(&d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub use_demographics: bool,
    pub belief_source: BeliefSource,
    pub dimensions: DimensionSelection,
    pub belief_encoding: BeliefEncoding,
    pub dropout_fraction: f64,
    pub seed: u64,
}

impl Default for ConditionSpec {
    fn default() -> Self {
        Self::zero_shot()
    }
}

impl ConditionSpec {
    pub fn zero_shot() -> Self {
        Self {
            use_demographics: false,
            belief_source: BeliefSource::None,
            dimensions: DimensionSelection::All,
            belief_encoding: BeliefEncoding::Modal,
            dropout_fraction: 0.0,
            seed: 0,
        }
    }

    pub fn demo_only() -> Self {
        Self {
            use_demographics: true,
            ..Self::zero_shot()
        }
    }

    pub fn with_beliefs(source: BeliefSource, use_demographics: bool) -> Self {
        Self {
            use_demographics,
            belief_source: source,
            ..Self::zero_shot()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dropout_fraction) || self.dropout_fraction.is_nan() {
            return Err(Error::Validation(format!(
                "dropout_fraction {} outside [0, 1]",
                self.dropout_fraction
            )));
        }
        if self.dropout_fraction > 0.0 && !self.belief_source.uses_imputed() {
            return Err(Error::Validation(
                "belief dropout requires an imputed belief source".into(),
            ));
        }
        if let DimensionSelection::Only(set) = &self.dimensions {
            if set.is_empty() && self.belief_source.uses_imputed() {
                return Err(Error::Validation("empty dimension selection".into()));
            }
        }
        Ok(())
    }

    /// Drops fields that have no effect so equivalent conditions compare equal.
    pub fn normalized(&self) -> Self {
        let mut c = self.clone();
        if !c.belief_source.uses_imputed() {
            c.dimensions = DimensionSelection::All;
            c.belief_encoding = BeliefEncoding::Modal;
            c.dropout_fraction = 0.0;
        }
        c
    }

    /// Stable hex SHA-256 of the normalized condition's canonical JSON.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(&self.normalized()).expect("condition serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Short human-readable name, e.g. `imputed[emotion]+demo`.
    pub fn label(&self) -> String {
        let mut s = match self.belief_source {
            BeliefSource::None if self.use_demographics => return "demo_only".into(),
            BeliefSource::None => return "zero_shot".into(),
            BeliefSource::Imputed => "imputed".to_string(),
            BeliefSource::Observed => "observed".to_string(),
            BeliefSource::ImputedPlusObserved => "imputed_observed".to_string(),
        };
        if self.belief_source.uses_imputed() {
            if let DimensionSelection::Only(set) = &self.dimensions {
                let names: Vec<String> = set.iter().map(|d| format!("{d:?}")).collect();
                s.push_str(&format!("[{}]", names.join(",")));
            }
            if self.belief_encoding == BeliefEncoding::Distribution {
                s.push_str("~dist");
            }
            if self.dropout_fraction > 0.0 {
                s.push_str(&format!("~drop{}", self.dropout_fraction));
            }
        }
        if self.use_demographics {
            s.push_str("+demo");
        }
        s
    }
}

impl fmt::Display for ConditionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaPrompt {
    pub system_text: String,
    pub user_text: String,
    pub condition_fingerprint: String,
    pub axis: Axis,
    pub participant_ref: String,
    pub claim_ref: String,
}

pub const DEMOGRAPHIC_PREFIX: &str = "You are a persona grounded by attributes: ";
pub const BELIEF_PREFIX: &str =
    "Past beliefs and priors for this persona (for context, do not re-evaluate them): ";
pub const CONSISTENCY_SUFFIX: &str =
    "When judging a claim, stay consistent with this persona's prior beliefs where reasonable.";

pub fn user_text(claim_text: &str) -> String {
    format!(
        "Is the following claim true or fake? Answer with exactly one word: true or fake. Claim: {claim_text}"
    )
}

/// Everything a prompt may draw on besides the condition itself.
#[derive(Debug, Clone, Copy)]
pub struct PromptContext<'a> {
    pub store: &'a BeliefStore,
    pub cohort: &'a Cohort,
}

/// Renders one prompt. `axis` selects which demographic attribute (and which
/// group's imputed beliefs) the persona carries.
pub fn render_prompt(
    ctx: PromptContext<'_>,
    participant: &Participant,
    claim: &Claim,
    condition: &ConditionSpec,
    axis: Axis,
) -> Result<PersonaPrompt> {
    condition.validate()?;
    let needs_group = condition.use_demographics || condition.belief_source.uses_imputed();
    let group = if needs_group {
        if !ctx.cohort.available_axes().contains(&axis) {
            return Err(Error::AxisUnavailable(axis));
        }
        Some(participant.profiles.get(&axis).copied().ok_or_else(|| {
            Error::Validation(format!("participant {} has no {axis} group", participant.pid))
        })?)
    } else {
        None
    };

    let mut items: Vec<String> = Vec::new();
    if condition.belief_source.uses_imputed() {
        let group = group.expect("group resolved above");
        let questions: Vec<&SurveyQuestion> = ctx
            .store
            .questions_sorted()
            .into_iter()
            .filter(|q| condition.dimensions.contains(q.dimension))
            .collect();
        let kept = apply_belief_dropout(&questions, condition.dropout_fraction, condition.seed);
        for q in kept {
            let dist = ctx.store.distribution(&q.qid, group).ok_or_else(|| {
                Error::Validation(format!("no distribution for {} / {group}", q.qid))
            })?;
            items.push(match condition.belief_encoding {
                BeliefEncoding::Modal => format!(
                    "{}: modal answer {} of {}",
                    q.text,
                    dist.modal_response(),
                    dist.scale_size()
                ),
                BeliefEncoding::Distribution => {
                    let ps: Vec<String> = dist.probs.iter().map(|p| format!("{p:.3}")).collect();
                    format!("{}: [{}]", q.text, ps.join(","))
                }
            });
        }
    }
    if condition.belief_source.uses_observed() {
        if participant.observed_beliefs.is_empty() {
            return Err(Error::Validation(format!(
                "participant {} has no observed beliefs",
                participant.pid
            )));
        }
        for ob in &participant.observed_beliefs {
            let c = ctx
                .cohort
                .claim(&ob.claim_id)
                .ok_or_else(|| Error::unknown("claim", &ob.claim_id))?;
            items.push(format!("Claim \"{}\": judged {}", c.text, ob.judged_label));
        }
    }

    let demo = group
        .filter(|_| condition.use_demographics)
        .map(|g| format!("{DEMOGRAPHIC_PREFIX}{}.", g.phrase()));
    let beliefs = (condition.belief_source != BeliefSource::None)
        .then(|| format!("{BELIEF_PREFIX}{}. {CONSISTENCY_SUFFIX}", items.join("; ")));
    let system_text = match (demo, beliefs) {
        (None, None) => String::new(),
        (Some(d), None) => d,
        (None, Some(b)) => b,
        (Some(d), Some(b)) => format!("{d}  {b}"),
    };

    Ok(PersonaPrompt {
        system_text,
        user_text: user_text(&claim.text),
        condition_fingerprint: condition.fingerprint(),
        axis,
        participant_ref: participant.pid.clone(),
        claim_ref: claim.claim_id.clone(),
    })
}

/// Keeps `round((1 - fraction) * N)` items chosen by a seeded shuffle,
/// returned in their original order.
pub fn apply_belief_dropout<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Vec<T> {
    let n = items.len();
    let keep = ((1.0 - fraction.clamp(0.0, 1.0)) * n as f64).round() as usize;
    if keep >= n {
        return items.to_vec();
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen = idx[..keep].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| items[i].clone()).collect()
}

/// Parses the qid-free belief block back into `(question text, payload)` pairs.
pub fn parse_belief_block(system_text: &str) -> Vec<(String, String)> {
    let Some(start) = system_text.find(BELIEF_PREFIX) else {
        return Vec::new();
    };
    let body = &system_text[start + BELIEF_PREFIX.len()..];
    let end = body.rfind(&format!(". {CONSISTENCY_SUFFIX}")).unwrap_or(body.len());
    body[..end]
        .split("; ")
        .filter(|s| !s.is_empty())
        .filter_map(|item| {
            item.rsplit_once(": ")
                .map(|(q, v)| (q.to_string(), v.to_string()))
        })
        .collect()
}

/// One named entry of the experimental grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub name: String,
    /// Appendix variants (distribution-encoded twins) are not primary.
    pub appendix: bool,
    /// Best-dimension settings expand into one run per dimension; the report
    /// layer keeps the highest-scoring one.
    pub best_of: bool,
    pub runs: Vec<ConditionSpec>,
}

/// The twelve primary settings plus distribution-encoded twins of every
/// setting that carries imputed beliefs.
pub fn enumerate_conditions() -> Vec<Setting> {
    let mut out = Vec::new();
    let named = |name: &str, spec: ConditionSpec| Setting {
        name: name.to_string(),
        appendix: false,
        best_of: false,
        runs: vec![spec],
    };
    out.push(named("zero_shot", ConditionSpec::zero_shot()));
    out.push(named("demo_only", ConditionSpec::demo_only()));
    for (src, tag) in [
        (BeliefSource::Imputed, "imputed"),
        (BeliefSource::Observed, "observed"),
        (BeliefSource::ImputedPlusObserved, "imputed_observed"),
    ] {
        for demo in [false, true] {
            let name = if demo { format!("{tag}+demo") } else { tag.to_string() };
            out.push(named(&name, ConditionSpec::with_beliefs(src, demo)));
        }
    }
    for (src, tag) in [
        (BeliefSource::Imputed, "imputed_best"),
        (BeliefSource::ImputedPlusObserved, "imputed_observed_best"),
    ] {
        for demo in [false, true] {
            let runs = BeliefDimension::ALL
                .iter()
                .map(|&d| ConditionSpec {
                    dimensions: DimensionSelection::single(d),
                    ..ConditionSpec::with_beliefs(src, demo)
                })
                .collect();
            out.push(Setting {
                name: if demo { format!("{tag}+demo") } else { tag.to_string() },
                appendix: false,
                best_of: true,
                runs,
            });
        }
    }
    let twins: Vec<Setting> = out
        .iter()
        .filter(|s| s.runs[0].belief_source.uses_imputed())
        .map(|s| Setting {
            name: format!("{}~dist", s.name),
            appendix: true,
            best_of: s.best_of,
            runs: s
                .runs
                .iter()
                .map(|r| ConditionSpec {
                    belief_encoding: BeliefEncoding::Distribution,
                    ..r.clone()
                })
                .collect(),
        })
        .collect();
    out.extend(twins);
    out
}
