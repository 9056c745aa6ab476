//! Alignment, veracity and rank-correlation metrics over prediction records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, EntropyBin, Label};
use crate::demographics::{Axis, Group};
use crate::error::{Error, Result};
use crate::gateway::{PredictionRecord, Verdict};

/// Which column predictions are scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    ParticipantChoice,
    Gold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub condition_fingerprint: String,
    pub condition_label: String,
    pub model_name: String,
    pub axis: Option<Axis>,
    pub group: Option<Group>,
    pub n_requested: usize,
    pub n_evaluated: usize,
    pub n_unparseable: usize,
    /// `None` when no record was parseable.
    pub accuracy: Option<f64>,
    pub macro_f1: Option<f64>,
    pub unparseable_rate: f64,
    pub per_run: BTreeMap<u32, f64>,
    pub run_mean: Option<f64>,
    pub run_std: Option<f64>,
    pub warnings: Vec<String>,
}

impl AlignmentResult {
    pub fn is_empty(&self) -> bool {
        self.accuracy.is_none()
    }
}

fn common<'a>(records: &[&'a PredictionRecord], f: impl Fn(&'a PredictionRecord) -> &'a str) -> String {
    match records.first() {
        Some(first) if records.iter().all(|r| f(r) == f(first)) => f(first).to_string(),
        Some(_) => "*".to_string(),
        None => String::new(),
    }
}

fn target_of(cohort: &Cohort, r: &PredictionRecord, target: Target) -> Result<Label> {
    let j = cohort.judgment(&r.pid, &r.claim_id).ok_or_else(|| {
        Error::Validation(format!(
            "record ({}, {}) has no matching cohort judgment",
            r.pid, r.claim_id
        ))
    })?;
    Ok(match target {
        Target::ParticipantChoice => j.participant_choice,
        Target::Gold => j.gold_label,
    })
}

/// Scores `records` against the chosen target column.
pub fn score<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
    cohort: &Cohort,
    target: Target,
) -> Result<AlignmentResult> {
    let records: Vec<&PredictionRecord> = records.into_iter().collect();
    let mut pairs = Vec::new();
    let mut by_run: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    let mut n_unparseable = 0;
    for r in &records {
        let t = target_of(cohort, r, target)?;
        match r.predicted_label.label() {
            Some(p) => {
                pairs.push((p, t));
                let e = by_run.entry(r.run).or_default();
                e.0 += usize::from(p == t);
                e.1 += 1;
            }
            None => n_unparseable += 1,
        }
    }
    let n_requested = records.len();
    let n_evaluated = pairs.len();
    let accuracy = (n_evaluated > 0)
        .then(|| pairs.iter().filter(|(p, t)| p == t).count() as f64 / n_evaluated as f64);
    let mut warnings = Vec::new();
    let macro_f1 = (n_evaluated > 0).then(|| macro_f1(&pairs, &mut warnings));
    let per_run: BTreeMap<u32, f64> = by_run
        .into_iter()
        .map(|(run, (hit, n))| (run, hit as f64 / n as f64))
        .collect();
    let (run_mean, run_std) = mean_std(per_run.values().copied());
    Ok(AlignmentResult {
        condition_fingerprint: common(&records, |r| r.condition_fingerprint.as_str()),
        condition_label: common(&records, |r| r.condition_label.as_str()),
        model_name: common(&records, |r| r.model_name.as_str()),
        axis: records
            .first()
            .map(|r| r.axis)
            .filter(|a| records.iter().all(|r| r.axis == *a)),
        group: None,
        n_requested,
        n_evaluated,
        n_unparseable,
        accuracy,
        macro_f1,
        unparseable_rate: if n_requested == 0 {
            0.0
        } else {
            n_unparseable as f64 / n_requested as f64
        },
        per_run,
        run_mean,
        run_std,
        warnings,
    })
}

/// Agreement with each participant's own judgment.
pub fn susceptibility_alignment<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
    cohort: &Cohort,
) -> Result<AlignmentResult> {
    score(records, cohort, Target::ParticipantChoice)
}

/// Agreement with the gold label; `None` when nothing was parseable.
pub fn veracity_accuracy<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
    cohort: &Cohort,
) -> Result<Option<f64>> {
    Ok(score(records, cohort, Target::Gold)?.accuracy)
}

/// Unweighted mean of per-class F1 over {true, fake}.
///
/// A class with no true or predicted instances has undefined F1, scored 0.
pub fn macro_f1(pairs: &[(Label, Label)], warnings: &mut Vec<String>) -> f64 {
    let mut total = 0.0;
    for class in [Label::True, Label::Fake] {
        let tp = pairs.iter().filter(|(p, t)| *p == class && *t == class).count();
        let fp = pairs.iter().filter(|(p, t)| *p == class && *t != class).count();
        let fn_ = pairs.iter().filter(|(p, t)| *p != class && *t == class).count();
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            warnings.push(format!("F1 undefined for class {class}; counted as 0"));
        } else {
            total += 2.0 * tp as f64 / denom as f64;
        }
    }
    total / 2.0
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: impl IntoIterator<Item = f64>) -> (Option<f64>, Option<f64>) {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() < 2 {
        0.0
    } else {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (Some(mean), Some(std))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinAccuracy {
    pub n: usize,
    pub accuracy: f64,
}

/// Alignment accuracy per claim-entropy tertile; empty bins are absent.
pub fn accuracy_by_entropy_bin<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
    cohort: &Cohort,
) -> Result<BTreeMap<EntropyBin, BinAccuracy>> {
    let bins = cohort.entropy_bins();
    let mut tally: BTreeMap<EntropyBin, (usize, usize)> = BTreeMap::new();
    for r in records {
        let t = target_of(cohort, r, Target::ParticipantChoice)?;
        let Some(p) = r.predicted_label.label() else {
            continue;
        };
        let bin = bins
            .get(&r.claim_id)
            .copied()
            .ok_or_else(|| Error::unknown("claim", &r.claim_id))?;
        let e = tally.entry(bin).or_default();
        e.0 += usize::from(p == t);
        e.1 += 1;
    }
    Ok(tally
        .into_iter()
        .map(|(b, (hit, n))| {
            (
                b,
                BinAccuracy {
                    n,
                    accuracy: hit as f64 / n as f64,
                },
            )
        })
        .collect())
}

/// Alignment per demographic group, for one axis's worth of records.
pub fn group_alignment<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
    cohort: &Cohort,
    axis: Axis,
) -> Result<BTreeMap<Group, AlignmentResult>> {
    let mut by_group: BTreeMap<Group, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records.into_iter().filter(|r| r.axis == axis) {
        let p = cohort
            .participant(&r.pid)
            .ok_or_else(|| Error::unknown("participant", &r.pid))?;
        if let Some(&g) = p.profiles.get(&axis) {
            by_group.entry(g).or_default().push(r);
        }
    }
    by_group
        .into_iter()
        .map(|(g, rs)| {
            let mut res = susceptibility_alignment(rs, cohort)?;
            res.axis = Some(axis);
            res.group = Some(g);
            Ok((g, res))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupAggregate {
    /// Size-weighted mean; equals the pooled accuracy.
    pub weighted: f64,
    /// Plain mean over groups.
    pub unweighted: f64,
}

pub fn aggregate_groups(groups: &BTreeMap<Group, AlignmentResult>) -> Option<GroupAggregate> {
    let scored: Vec<(usize, f64)> = groups
        .values()
        .filter_map(|r| r.accuracy.map(|a| (r.n_evaluated, a)))
        .collect();
    if scored.is_empty() {
        return None;
    }
    let n: usize = scored.iter().map(|(n, _)| n).sum();
    Some(GroupAggregate {
        weighted: scored.iter().map(|(n, a)| *n as f64 * a).sum::<f64>() / n as f64,
        unweighted: scored.iter().map(|(_, a)| a).sum::<f64>() / scored.len() as f64,
    })
}

/// Ranks with ties sharing their average position (1-based).
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho as the Pearson correlation of average ranks.
///
/// `Ok(None)` marks an undefined correlation (a constant input).
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::Validation(format!(
            "spearman needs at least 3 points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spearman input".into()));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(None);
    }
    Ok(Some((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceCorrelation {
    pub n: usize,
    /// `None` when either series is constant.
    pub rho: Option<f64>,
}

/// Correlates model confidence with whether each prediction matched the
/// participant, over gold-fake claims only.
pub fn confidence_alignment_correlation<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
    cohort: &Cohort,
) -> Result<ConfidenceCorrelation> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in records {
        let (Some(conf), Some(pred)) = (r.confidence, r.predicted_label.label()) else {
            continue;
        };
        let j = cohort
            .judgment(&r.pid, &r.claim_id)
            .ok_or_else(|| Error::unknown("judgment", format!("{}/{}", r.pid, r.claim_id)))?;
        if j.gold_label != Label::Fake {
            continue;
        }
        xs.push(conf);
        ys.push(if pred == j.participant_choice { 1.0 } else { 0.0 });
    }
    let rho = if xs.len() < 3 {
        None
    } else {
        spearman_rho(&xs, &ys)?
    };
    Ok(ConfidenceCorrelation { n: xs.len(), rho })
}

/// Counts of records per verdict, handy for summaries.
pub fn verdict_counts<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
) -> BTreeMap<Verdict, usize> {
    let mut m = BTreeMap::new();
    for r in records {
        *m.entry(r.predicted_label).or_insert(0) += 1;
    }
    m
}
