//! Counterfactual panels: demographic swaps, swaps on label-balanced claims,
//! and belief-only versus belief-plus-demographic comparisons.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::belief_store::BeliefStore;
use crate::cohort::{ClaimJudgment, Cohort, Label};
use crate::demographics::Axis;
use crate::error::{Error, Result};
use crate::gateway::{Gateway, PredictionRecord, Sampling};
use crate::prompt::{render_prompt, BeliefSource, ConditionSpec, PersonaPrompt, PromptContext};
use crate::sim::{par_map, susceptibility_alignment, AlignmentResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Panel {
    Utility,
    Shortcut,
    Complementarity,
}

impl fmt::Display for Panel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelConfig {
    pub runs: u32,
    pub base_seed: u64,
    pub temperature: f64,
    pub workers: usize,
    /// Largest allowed gap in P(choice = true) between groups.
    pub epsilon: f64,
    /// Judgments required per group before a claim is considered.
    pub min_n: usize,
    /// In the shortcut panel, swap group-imputed beliefs along with the phrase.
    pub shortcut_swaps_beliefs: bool,
    pub dropout: f64,
    pub dropout_seed: u64,
}

impl Default for PanelConfig {
    fn default() -> Self {
        Self {
            runs: 1,
            base_seed: 0,
            temperature: 0.7,
            workers: 4,
            epsilon: 0.05,
            min_n: 3,
            shortcut_swaps_beliefs: false,
            dropout: 0.7,
            dropout_seed: 0,
        }
    }
}

/// Two predictions for one (participant, claim) that differ only in the
/// manipulated input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapPair {
    pub base: PredictionRecord,
    pub swapped: PredictionRecord,
    pub axis: Axis,
    pub claim_id: String,
    /// `None` when either side is unparseable.
    pub flipped: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelResult {
    pub panel: Panel,
    pub axis: Axis,
    pub model_name: String,
    /// Percentage of parseable pairs whose verdict changed; `None` without pairs.
    pub flip_rate: Option<f64>,
    /// Complementarity only: acc(belief+demo) - acc(belief-only), in [−1, 1].
    pub accuracy_delta: Option<f64>,
    pub n_pairs: usize,
    pub n_excluded: usize,
    /// Why the panel was not run, if it was skipped.
    pub skipped: Option<String>,
    pub pairs: Vec<SwapPair>,
}

impl PanelResult {
    fn from_pairs(panel: Panel, axis: Axis, model_name: &str, pairs: Vec<SwapPair>) -> Self {
        let n_pairs = pairs.iter().filter(|p| p.flipped.is_some()).count();
        let flips = pairs.iter().filter(|p| p.flipped == Some(true)).count();
        Self {
            panel,
            axis,
            model_name: model_name.to_string(),
            flip_rate: (n_pairs > 0).then(|| 100.0 * flips as f64 / n_pairs as f64),
            accuracy_delta: None,
            n_pairs,
            n_excluded: pairs.len() - n_pairs,
            skipped: None,
            pairs,
        }
    }

    fn skipped(panel: Panel, axis: Axis, model_name: &str, why: String) -> Self {
        Self {
            panel,
            axis,
            model_name: model_name.to_string(),
            flip_rate: None,
            accuracy_delta: None,
            n_pairs: 0,
            n_excluded: 0,
            skipped: Some(why),
            pairs: Vec::new(),
        }
    }
}

fn flipped(a: &PredictionRecord, b: &PredictionRecord) -> Option<bool> {
    Some(a.predicted_label.label()? != b.predicted_label.label()?)
}

fn ask(
    gateway: &Gateway,
    prompt: &PersonaPrompt,
    condition: &ConditionSpec,
    run: u32,
    cfg: &PanelConfig,
) -> Result<PredictionRecord> {
    let mut rec = gateway.complete(
        prompt,
        Sampling {
            temperature: cfg.temperature,
            seed: cfg.base_seed.wrapping_add(u64::from(run)),
        },
    )?;
    rec.run = run;
    rec.condition_label = condition.label();
    Ok(rec)
}

/// Checks that two prompts differ only by the persona phrase (and, for
/// imputed conditions, the belief block).
fn check_swap_diff(base: &PersonaPrompt, swapped: &PersonaPrompt, axis: Axis, cond: &ConditionSpec, from: &str, to: &str) -> Result<()> {
    if base.user_text != swapped.user_text {
        return Err(Error::Validation("swap changed the claim question".into()));
    }
    if cond.belief_source.uses_imputed() {
        let head = |s: &str| s.split("  ").next().unwrap_or("").to_string();
        if head(&base.system_text).replacen(from, to, 1) != head(&swapped.system_text) {
            return Err(Error::Validation(format!("{axis} swap changed more than the persona")));
        }
    } else if base.system_text.replacen(from, to, 1) != swapped.system_text {
        return Err(Error::Validation(format!("{axis} swap changed more than the persona")));
    }
    Ok(())
}

fn swap_pairs(
    ctx: PromptContext<'_>,
    gateway: &Gateway,
    judgments: &[&ClaimJudgment],
    axis: Axis,
    condition: &ConditionSpec,
    cfg: &PanelConfig,
) -> Result<Vec<SwapPair>> {
    let items: Vec<(&ClaimJudgment, u32)> = judgments
        .iter()
        .flat_map(|j| (0..cfg.runs).map(move |r| (*j, r)))
        .collect();
    par_map(&items, cfg.workers, |(j, run)| {
        let p = ctx
            .cohort
            .participant(&j.pid)
            .ok_or_else(|| Error::unknown("participant", &j.pid))?;
        let claim = ctx
            .cohort
            .claim(&j.claim_id)
            .ok_or_else(|| Error::unknown("claim", &j.claim_id))?;
        let group = p.profiles[&axis];
        let mut alt = p.clone();
        alt.profiles.insert(axis, group.swapped());
        let base_prompt = render_prompt(ctx, p, claim, condition, axis)?;
        let swap_prompt = render_prompt(ctx, &alt, claim, condition, axis)?;
        check_swap_diff(
            &base_prompt,
            &swap_prompt,
            axis,
            condition,
            group.phrase(),
            group.swapped().phrase(),
        )?;
        let base = ask(gateway, &base_prompt, condition, *run, cfg)?;
        let swapped = ask(gateway, &swap_prompt, condition, *run, cfg)?;
        Ok(SwapPair {
            flipped: flipped(&base, &swapped),
            base,
            swapped,
            axis,
            claim_id: j.claim_id.clone(),
        })
    })
    .into_iter()
    .collect()
}

fn axis_judgments<'a>(
    cohort: &'a Cohort,
    axis: Axis,
    claims: Option<&BTreeSet<String>>,
) -> Result<Vec<&'a ClaimJudgment>> {
    if !cohort.available_axes().contains(&axis) {
        return Err(Error::AxisUnavailable(axis));
    }
    Ok(cohort
        .evaluation()
        .iter()
        .filter(|j| {
            cohort
                .participant(&j.pid)
                .is_some_and(|p| p.profiles.contains_key(&axis))
        })
        .filter(|j| claims.is_none_or(|c| c.contains(&j.claim_id)))
        .collect())
}

/// Swaps the demographic group under `condition` (normally demo-only) and
/// counts verdict changes.
pub fn utility_panel(
    store: &BeliefStore,
    cohort: &Cohort,
    axis: Axis,
    gateway: &Gateway,
    condition: &ConditionSpec,
    cfg: &PanelConfig,
) -> Result<PanelResult> {
    if !condition.use_demographics {
        return Err(Error::Validation("utility panel needs a demographic condition".into()));
    }
    let ctx = PromptContext { store, cohort };
    let js = axis_judgments(cohort, axis, None)?;
    let pairs = swap_pairs(ctx, gateway, &js, axis, condition, cfg)?;
    Ok(PanelResult::from_pairs(
        Panel::Utility,
        axis,
        &gateway.endpoint().model_name,
        pairs,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimBalance {
    pub n: [usize; 2],
    pub p_true: [f64; 2],
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedSlice {
    pub axis: Axis,
    pub epsilon: f64,
    pub claims: BTreeSet<String>,
    /// Every claim with enough judgments in both groups.
    pub candidates: BTreeMap<String, ClaimBalance>,
}

impl BalancedSlice {
    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }
}

/// Claims whose share of `true` choices differs by at most `epsilon` between
/// the two groups of `axis`, among claims with `min_n` judgments per group.
pub fn build_balanced_slice(cohort: &Cohort, axis: Axis, epsilon: f64, min_n: usize) -> Result<BalancedSlice> {
    if !cohort.available_axes().contains(&axis) {
        return Err(Error::AxisUnavailable(axis));
    }
    let groups = axis.groups();
    let mut tally: BTreeMap<&str, [(usize, usize); 2]> = BTreeMap::new();
    for j in cohort.judgments() {
        let Some(g) = cohort.participant(&j.pid).and_then(|p| p.profiles.get(&axis)) else {
            continue;
        };
        let gi = usize::from(*g == groups[1]);
        let t = tally.entry(j.claim_id.as_str()).or_default();
        t[gi].1 += 1;
        if j.participant_choice == Label::True {
            t[gi].0 += 1;
        }
    }
    let mut candidates = BTreeMap::new();
    let mut claims = BTreeSet::new();
    for (claim, t) in tally {
        if t[0].1 < min_n || t[1].1 < min_n {
            continue;
        }
        let p = [t[0].0 as f64 / t[0].1 as f64, t[1].0 as f64 / t[1].1 as f64];
        let gap = (p[0] - p[1]).abs();
        // slack absorbs rounding when the gap equals epsilon exactly
        if gap <= epsilon + 1e-12 {
            claims.insert(claim.to_string());
        }
        candidates.insert(
            claim.to_string(),
            ClaimBalance {
                n: [t[0].1, t[1].1],
                p_true: p,
                gap,
            },
        );
    }
    Ok(BalancedSlice {
        axis,
        epsilon,
        claims,
        candidates,
    })
}

/// Demographic swaps restricted to claims where groups judged alike.
pub fn shortcut_panel(
    store: &BeliefStore,
    cohort: &Cohort,
    axis: Axis,
    gateway: &Gateway,
    cfg: &PanelConfig,
) -> Result<PanelResult> {
    let model = &gateway.endpoint().model_name;
    let slice = build_balanced_slice(cohort, axis, cfg.epsilon, cfg.min_n)?;
    if slice.is_empty() {
        return Ok(PanelResult::skipped(
            Panel::Shortcut,
            axis,
            model,
            format!("no balanced claims at epsilon {}", cfg.epsilon),
        ));
    }
    let condition = if cfg.shortcut_swaps_beliefs {
        ConditionSpec::with_beliefs(BeliefSource::Imputed, true)
    } else {
        ConditionSpec::demo_only()
    };
    let ctx = PromptContext { store, cohort };
    let js = axis_judgments(cohort, axis, Some(&slice.claims))?;
    let pairs = swap_pairs(ctx, gateway, &js, axis, &condition, cfg)?;
    Ok(PanelResult::from_pairs(Panel::Shortcut, axis, model, pairs))
}

/// Complementarity outcome with both underlying alignment results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplementarityResult {
    pub panel: PanelResult,
    pub belief_only: AlignmentResult,
    pub belief_demo: AlignmentResult,
}

/// Compares belief-only and belief-plus-demographic prompts on a
/// dropout-reduced imputed belief set.
pub fn complementarity_panel(
    store: &BeliefStore,
    cohort: &Cohort,
    axis: Axis,
    gateway: &Gateway,
    cfg: &PanelConfig,
) -> Result<ComplementarityResult> {
    let ctx = PromptContext { store, cohort };
    let make = |demo| ConditionSpec {
        dropout_fraction: cfg.dropout,
        seed: cfg.dropout_seed,
        ..ConditionSpec::with_beliefs(BeliefSource::Imputed, demo)
    };
    let (only, both) = (make(false), make(true));
    let js = axis_judgments(cohort, axis, None)?;
    let items: Vec<(&ClaimJudgment, u32)> = js
        .iter()
        .flat_map(|j| (0..cfg.runs).map(move |r| (*j, r)))
        .collect();
    let pairs: Vec<SwapPair> = par_map(&items, cfg.workers, |(j, run)| {
        let p = cohort
            .participant(&j.pid)
            .ok_or_else(|| Error::unknown("participant", &j.pid))?;
        let claim = cohort
            .claim(&j.claim_id)
            .ok_or_else(|| Error::unknown("claim", &j.claim_id))?;
        let a = ask(gateway, &render_prompt(ctx, p, claim, &only, axis)?, &only, *run, cfg)?;
        let b = ask(gateway, &render_prompt(ctx, p, claim, &both, axis)?, &both, *run, cfg)?;
        Ok(SwapPair {
            flipped: flipped(&a, &b),
            base: a,
            swapped: b,
            axis,
            claim_id: j.claim_id.clone(),
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let complete: Vec<&SwapPair> = pairs.iter().filter(|p| p.flipped.is_some()).collect();
    let belief_only = susceptibility_alignment(complete.iter().map(|p| &p.base), cohort)?;
    let belief_demo = susceptibility_alignment(complete.iter().map(|p| &p.swapped), cohort)?;
    let mut panel = PanelResult::from_pairs(
        Panel::Complementarity,
        axis,
        &gateway.endpoint().model_name,
        pairs,
    );
    panel.accuracy_delta = match (belief_demo.accuracy, belief_only.accuracy) {
        (Some(b), Some(a)) => Some(b - a),
        _ => None,
    };
    Ok(ComplementarityResult {
        panel,
        belief_only,
        belief_demo,
    })
}

const DEMOGRAPHIC_TERMS: [&str; 24] = [
    "female", "male", "woman", "women", "man", "men", "gender", "age", "older", "younger",
    "elderly", "young", "old", "senior", "education", "educated", "school", "degree", "rural",
    "urban", "city", "countryside", "village", "persona",
];

fn terms_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(&format!(r"(?i)\b({})\b", DEMOGRAPHIC_TERMS.join("|"))).expect("static regex")
    })
}

/// Demographic words mentioned in a raw model reply, lowercased and deduplicated.
pub fn flag_demographic_mentions(raw_text: &str) -> BTreeSet<String> {
    terms_re()
        .find_iter(raw_text)
        .map(|m| m.as_str().to_lowercase())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyword_flags() {
        let f = flag_demographic_mentions("As an older woman from a rural village, FAKE.");
        assert_eq!(
            f.into_iter().collect::<Vec<_>>(),
            vec!["older", "rural", "village", "woman"]
        );
        assert!(flag_demographic_mentions("Fake. The manager said so.").is_empty());
    }
}
