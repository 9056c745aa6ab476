//! Evaluation sweeps over (participant, claim, condition, model, run, axis).

pub mod metrics;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use metrics::{
    accuracy_by_entropy_bin, aggregate_groups, average_ranks, confidence_alignment_correlation,
    group_alignment, macro_f1, mean_std, score, spearman_rho, susceptibility_alignment,
    veracity_accuracy, AlignmentResult, BinAccuracy, ConfidenceCorrelation, GroupAggregate,
    Target,
};

use crate::belief_store::BeliefStore;
use crate::cohort::Cohort;
use crate::demographics::Axis;
use crate::error::{Error, Result};
use crate::gateway::{Confidence, Gateway, PredictionRecord, RecordKey, Sampling};
use crate::prompt::{render_prompt, ConditionSpec, PromptContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub conditions: Vec<ConditionSpec>,
    pub axes: Vec<Axis>,
    pub runs: u32,
    pub base_seed: u64,
    pub temperature: f64,
    pub workers: usize,
    /// Process only the first `limit` work items (for staged or partial runs).
    pub limit: Option<usize>,
    /// Attach each model's zero-shot confidence on the claim to its records.
    pub probe_confidence: bool,
    /// Work items already completed by an earlier, interrupted run.
    #[serde(skip)]
    pub done: BTreeSet<RecordKey>,
}

impl Default for SweepPlan {
    fn default() -> Self {
        Self {
            conditions: vec![ConditionSpec::zero_shot()],
            axes: Axis::ALL.to_vec(),
            runs: 3,
            base_seed: 0,
            temperature: 0.7,
            workers: 4,
            limit: None,
            probe_confidence: false,
            done: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Render,
    Transport,
    Confidence,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FailureEntry {
    pub kind: FailureKind,
    pub model_name: String,
    pub condition_label: String,
    pub axis: Option<Axis>,
    pub pid: String,
    pub claim_id: String,
    pub run: u32,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub records: Vec<PredictionRecord>,
    pub failures: Vec<FailureEntry>,
    pub n_work_items: usize,
    pub n_cached: usize,
}

impl SweepOutcome {
    pub fn cache_hit_rate(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.n_cached as f64 / self.records.len() as f64
        }
    }

    pub fn has_transport_failures(&self) -> bool {
        self.failures.iter().any(|f| f.kind == FailureKind::Transport)
    }
}

#[derive(Debug, Clone)]
struct WorkItem<'a> {
    pid: &'a str,
    claim_id: &'a str,
    condition: usize,
    model: usize,
    run: u32,
    axis: Axis,
}

fn classify(e: &Error) -> FailureKind {
    match e {
        Error::Transport { .. } => FailureKind::Transport,
        Error::Validation(_) | Error::AxisUnavailable(_) | Error::Unknown { .. } => {
            FailureKind::Render
        }
        _ => FailureKind::Other,
    }
}

/// Runs every evaluation judgment through every condition, model, run and
/// axis. Errors on individual items go to the failure manifest.
///
/// Participants without a group on an axis are skipped for that axis, as are
/// items listed in `plan.done`. `limit` applies before that filter, so a
/// resumed run with the same limit covers the same items.
pub fn run_sweep(
    store: &BeliefStore,
    cohort: &Cohort,
    gateways: &[Gateway],
    plan: &SweepPlan,
) -> Result<SweepOutcome> {
    for c in &plan.conditions {
        c.validate()?;
    }
    let ctx = PromptContext { store, cohort };
    let axes: Vec<Axis> = plan
        .axes
        .iter()
        .copied()
        .filter(|a| cohort.available_axes().contains(a))
        .collect();

    let mut work = Vec::new();
    for model in 0..gateways.len() {
        for (ci, _) in plan.conditions.iter().enumerate() {
            for &axis in &axes {
                for run in 0..plan.runs {
                    for j in cohort.evaluation() {
                        let has_group = cohort
                            .participant(&j.pid)
                            .is_some_and(|p| p.profiles.contains_key(&axis));
                        if has_group {
                            work.push(WorkItem {
                                pid: &j.pid,
                                claim_id: &j.claim_id,
                                condition: ci,
                                model,
                                run,
                                axis,
                            });
                        }
                    }
                }
            }
        }
    }
    if let Some(limit) = plan.limit {
        work.truncate(limit);
    }
    if !plan.done.is_empty() {
        let fps: Vec<String> = plan.conditions.iter().map(ConditionSpec::fingerprint).collect();
        work.retain(|w| !plan.done.contains(&item_key(gateways, &fps, w)));
    }

    let mut failures = Vec::new();
    let mut confidences: BTreeMap<(usize, &str), Confidence> = BTreeMap::new();
    if plan.probe_confidence {
        let claims: std::collections::BTreeSet<(usize, &str)> =
            work.iter().map(|w| (w.model, w.claim_id)).collect();
        for (m, claim_id) in claims {
            let text = &cohort.claim(claim_id).expect("evaluation claim exists").text;
            match gateways[m].factual_confidence(text, plan.base_seed) {
                Ok(c) => {
                    confidences.insert((m, claim_id), c);
                }
                Err(e) => failures.push(FailureEntry {
                    kind: FailureKind::Confidence,
                    model_name: gateways[m].endpoint().model_name.clone(),
                    condition_label: "confidence_probe".into(),
                    axis: None,
                    pid: String::new(),
                    claim_id: claim_id.to_string(),
                    run: 0,
                    message: e.to_string(),
                }),
            }
        }
    }

    let results = par_map(&work, plan.workers, |item| {
        execute(ctx, cohort, gateways, plan, item, &confidences)
    });

    let mut records = Vec::new();
    for (item, res) in work.iter().zip(results) {
        match res {
            Ok(r) => records.push(r),
            Err(e) => failures.push(FailureEntry {
                kind: classify(&e),
                model_name: gateways[item.model].endpoint().model_name.clone(),
                condition_label: plan.conditions[item.condition].label(),
                axis: Some(item.axis),
                pid: item.pid.to_string(),
                claim_id: item.claim_id.to_string(),
                run: item.run,
                message: e.to_string(),
            }),
        }
    }
    let n_cached = records.iter().filter(|r| r.cached).count();
    Ok(SweepOutcome {
        records,
        failures,
        n_work_items: work.len(),
        n_cached,
    })
}

fn item_key(gateways: &[Gateway], fingerprints: &[String], w: &WorkItem<'_>) -> RecordKey {
    RecordKey {
        model_name: gateways[w.model].endpoint().model_name.clone(),
        condition_fingerprint: fingerprints[w.condition].clone(),
        axis: w.axis,
        run: w.run,
        pid: w.pid.to_string(),
        claim_id: w.claim_id.to_string(),
    }
}

fn execute(
    ctx: PromptContext<'_>,
    cohort: &Cohort,
    gateways: &[Gateway],
    plan: &SweepPlan,
    item: &WorkItem<'_>,
    confidences: &BTreeMap<(usize, &str), Confidence>,
) -> Result<PredictionRecord> {
    let participant = cohort
        .participant(item.pid)
        .ok_or_else(|| Error::unknown("participant", item.pid))?;
    let claim = cohort
        .claim(item.claim_id)
        .ok_or_else(|| Error::unknown("claim", item.claim_id))?;
    let condition = &plan.conditions[item.condition];
    let prompt = render_prompt(ctx, participant, claim, condition, item.axis)?;
    let seed = plan.base_seed.wrapping_add(u64::from(item.run));
    let mut rec = gateways[item.model].complete(
        &prompt,
        Sampling {
            temperature: plan.temperature,
            seed,
        },
    )?;
    rec.run = item.run;
    rec.condition_label = condition.label();
    if let Some(c) = confidences.get(&(item.model, item.claim_id)) {
        rec.confidence = Some(c.value);
        rec.confidence_method = Some(c.method);
    }
    Ok(rec)
}

/// Applies `f` to every item on up to `workers` threads, preserving order.
pub fn par_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    let workers = workers.max(1).min(items.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                let out = f(item);
                slots.lock().expect("results lock")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

/// Records grouped by (model, condition fingerprint, axis), in sorted order.
pub fn partition_records(
    records: &[PredictionRecord],
) -> BTreeMap<(String, String, Axis), Vec<&PredictionRecord>> {
    let mut m: BTreeMap<(String, String, Axis), Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        m.entry((r.model_name.clone(), r.condition_fingerprint.clone(), r.axis))
            .or_default()
            .push(r);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MockBackend, ModelEndpoint};
    use crate::synth;
    use std::sync::Arc;

    fn gw(max_inflight: usize) -> Gateway {
        let mut e = ModelEndpoint::new("mock", "mock://");
        e.max_inflight = max_inflight;
        Gateway::new(e, Arc::new(MockBackend::hashing(1))).unwrap()
    }

    #[test]
    fn counting_and_rerun_is_cached() {
        let store = synth::belief_store(1, 0.3).unwrap();
        let cohort = synth::cohort(&synth::CohortSpec {
            n_participants: 2,
            n_claims: 3,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(cohort.evaluation().len(), 2);
        let plan = SweepPlan {
            conditions: vec![ConditionSpec::zero_shot(), ConditionSpec::demo_only()],
            axes: vec![Axis::Gender],
            runs: 1,
            ..Default::default()
        };
        let g = [gw(2)];
        let first = run_sweep(&store, &cohort, &g, &plan).unwrap();
        assert_eq!(first.records.len(), 4);
        assert!(first.failures.is_empty());
        let second = run_sweep(&store, &cohort, &g, &plan).unwrap();
        assert_eq!(second.cache_hit_rate(), 1.0);
    }
}
