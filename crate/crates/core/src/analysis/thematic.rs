//! TF-IDF features, multiplicative-update NMF and per-topic demographic gaps.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapter::Matrix;
use crate::cohort::{Claim, Cohort};
use crate::demographics::{Axis, Group};
use crate::error::{Error, Result};
use crate::gateway::PredictionRecord;
use crate::sim::group_alignment;

/// Objective increases larger than this abort the factorization.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-8;
/// Groups with fewer parseable records than this are flagged.
pub const MIN_TOPIC_SUPPORT: usize = 5;
const DENOM_FLOOR: f64 = 1e-12;

/// Lowercased, ASCII-folded alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    deunicode::deunicode(text)
        .to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tfidf {
    pub vocabulary: Vec<String>,
    /// Documents × vocabulary, rows L2-normalized.
    pub matrix: Matrix,
}

/// Sublinear TF (`1 + ln tf`) times smoothed IDF (`ln((1+n)/(1+df)) + 1`).
pub fn tfidf(docs: &[&str]) -> Result<Tfidf> {
    let tokenized: Vec<Vec<String>> = docs.iter().map(|d| tokenize(d)).collect();
    let vocab: BTreeSet<&str> = tokenized.iter().flatten().map(String::as_str).collect();
    if vocab.is_empty() {
        return Err(Error::Empty("TF-IDF vocabulary".into()));
    }
    let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let n = docs.len();
    let m = vocab.len();
    let mut df = vec![0usize; m];
    let mut counts: Vec<BTreeMap<usize, usize>> = Vec::with_capacity(n);
    for toks in &tokenized {
        let mut c: BTreeMap<usize, usize> = BTreeMap::new();
        for t in toks {
            *c.entry(index[t.as_str()]).or_default() += 1;
        }
        for &j in c.keys() {
            df[j] += 1;
        }
        counts.push(c);
    }
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| ((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0)
        .collect();
    let mut matrix = Matrix::zeros(n, m);
    for (i, c) in counts.iter().enumerate() {
        for (&j, &tf) in c {
            matrix.set(i, j, (1.0 + (tf as f64).ln()) * idf[j]);
        }
        let norm = matrix.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for j in 0..m {
                matrix.set(i, j, matrix.get(i, j) / norm);
            }
        }
    }
    Ok(Tfidf {
        vocabulary: vocab.into_iter().map(str::to_string).collect(),
        matrix,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfFit {
    pub w: Matrix,
    pub h: Matrix,
    /// Frobenius error at initialization and after every iteration.
    pub errors: Vec<f64>,
}

fn frobenius_error(v: &Matrix, w: &Matrix, h: &Matrix) -> Result<f64> {
    let wh = w.matmul(h)?;
    Ok(v.as_slice()
        .iter()
        .zip(wh.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Multiplicative updates for `V ≈ W H` under the Frobenius loss.
///
/// Fails if the error ever rises by more than [`MONOTONICITY_TOLERANCE`].
pub fn nmf(v: &Matrix, k: usize, iters: usize, seed: u64) -> Result<NmfFit> {
    let (n, m) = (v.rows(), v.cols());
    if k == 0 || k > n {
        return Err(Error::Validation(format!("k={k} with {n} rows")));
    }
    if v.as_slice().iter().any(|x| *x < 0.0 || !x.is_finite()) {
        return Err(Error::Validation("NMF input must be finite and non-negative".into()));
    }
    let mean = v.as_slice().iter().sum::<f64>() / (n * m).max(1) as f64;
    if mean == 0.0 {
        return Err(Error::Empty("NMF input is all zeros".into()));
    }
    let scale = (mean / k as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |r, c| {
        let data = (0..r * c).map(|_| scale * rng.random_range(0.01..1.0)).collect();
        Matrix::from_vec(r, c, data)
    };
    let mut w = draw(n, k)?;
    let mut h = draw(k, m)?;
    let mut errors = vec![frobenius_error(v, &w, &h)?];
    for it in 0..iters {
        let wt = w.transpose();
        let num = wt.matmul(v)?;
        let den = wt.matmul(&w)?.matmul(&h)?;
        for ((x, a), b) in h.as_mut_slice().iter_mut().zip(num.as_slice()).zip(den.as_slice()) {
            *x *= a / (b + DENOM_FLOOR);
        }
        let ht = h.transpose();
        let num = v.matmul(&ht)?;
        let den = w.matmul(&h.matmul(&ht)?)?;
        for ((x, a), b) in w.as_mut_slice().iter_mut().zip(num.as_slice()).zip(den.as_slice()) {
            *x *= a / (b + DENOM_FLOOR);
        }
        let err = frobenius_error(v, &w, &h)?;
        let prev = *errors.last().expect("initial error recorded");
        if !err.is_finite() || err > prev + MONOTONICITY_TOLERANCE {
            return Err(Error::Training(format!(
                "NMF objective rose from {prev} to {err} at iteration {}",
                it + 1
            )));
        }
        errors.push(err);
    }
    Ok(NmfFit { w, h, errors })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub vocabulary: Vec<String>,
    pub claim_ids: Vec<String>,
    /// Claims × k.
    pub w: Matrix,
    /// k × vocabulary.
    pub h: Matrix,
    pub k: usize,
    pub errors: Vec<f64>,
    /// Argmax topic per claim (lowest index on ties).
    pub assignments: Vec<usize>,
}

impl TopicModel {
    pub fn topic_of(&self, claim_id: &str) -> Option<usize> {
        self.claim_ids
            .iter()
            .position(|c| c == claim_id)
            .map(|i| self.assignments[i])
    }

    /// Highest-weighted terms of `topic`, ties broken alphabetically.
    pub fn top_terms(&self, topic: usize, n: usize) -> Vec<(&str, f64)> {
        let mut terms: Vec<(&str, f64)> = self
            .vocabulary
            .iter()
            .enumerate()
            .map(|(j, t)| (t.as_str(), self.h.get(topic, j)))
            .collect();
        terms.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        terms.truncate(n);
        terms
    }

    pub fn final_error(&self) -> f64 {
        *self.errors.last().expect("errors recorded")
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Fits `k` topics over the claim texts.
pub fn nmf_topics(claims: &[&Claim], k: usize, iters: usize, seed: u64) -> Result<TopicModel> {
    if k > claims.len() {
        return Err(Error::Validation(format!(
            "{k} topics requested for {} claims",
            claims.len()
        )));
    }
    let texts: Vec<&str> = claims.iter().map(|c| c.text.as_str()).collect();
    let tf = tfidf(&texts)?;
    let fit = nmf(&tf.matrix, k, iters, seed)?;
    let assignments = (0..claims.len()).map(|i| argmax(fit.w.row(i))).collect();
    Ok(TopicModel {
        vocabulary: tf.vocabulary,
        claim_ids: claims.iter().map(|c| c.claim_id.clone()).collect(),
        w: fit.w,
        h: fit.h,
        k,
        errors: fit.errors,
        assignments,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicGap {
    pub topic: usize,
    pub axis: Axis,
    pub groups: [Group; 2],
    pub n: [usize; 2],
    pub accuracy: [Option<f64>; 2],
    /// `accuracy[0] − accuracy[1]` in percentage points.
    pub gap_ppts: Option<f64>,
    pub low_support: bool,
}

/// Alignment gap between the two groups of each axis, per topic.
///
/// Each axis only sees records produced under that axis.
pub fn topic_demographic_gaps(
    model: &TopicModel,
    records: &[PredictionRecord],
    cohort: &Cohort,
    axes: &[Axis],
) -> Result<Vec<TopicGap>> {
    let mut out = Vec::new();
    for topic in 0..model.k {
        let in_topic: Vec<&PredictionRecord> = records
            .iter()
            .filter(|r| model.topic_of(&r.claim_id) == Some(topic))
            .collect();
        for &axis in axes {
            let by_group = group_alignment(in_topic.iter().copied(), cohort, axis)?;
            let groups = axis.groups();
            let stat = |g: Group| {
                by_group
                    .get(&g)
                    .map_or((0, None), |r| (r.n_evaluated, r.accuracy))
            };
            let (n0, a0) = stat(groups[0]);
            let (n1, a1) = stat(groups[1]);
            out.push(TopicGap {
                topic,
                axis,
                groups,
                n: [n0, n1],
                accuracy: [a0, a1],
                gap_ppts: a0.zip(a1).map(|(x, y)| 100.0 * (x - y)),
                low_support: n0 < MIN_TOPIC_SUPPORT || n1 < MIN_TOPIC_SUPPORT,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_folds_and_splits() {
        assert_eq!(tokenize("Café, COVID-19 vaccines!"), ["cafe", "covid", "19", "vaccines"]);
    }

    #[test]
    fn tfidf_rows_are_unit_norm_and_sublinear() {
        let t = tfidf(&["a a b", "b c"]).unwrap();
        assert_eq!(t.vocabulary, ["a", "b", "c"]);
        let idf_a = (3.0f64 / 2.0).ln() + 1.0;
        let idf_b = 1.0;
        let raw = [(1.0 + 2f64.ln()) * idf_a, idf_b];
        let norm = (raw[0] * raw[0] + raw[1] * raw[1]).sqrt();
        assert!((t.matrix.get(0, 0) - raw[0] / norm).abs() < 1e-12);
        assert!((t.matrix.get(0, 1) - raw[1] / norm).abs() < 1e-12);
        assert_eq!(t.matrix.get(0, 2), 0.0);
        for i in 0..2 {
            let s: f64 = t.matrix.row(i).iter().map(|x| x * x).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_one_is_recovered() {
        let u = [1.0, 2.0, 0.5, 3.0];
        let v = [0.2, 1.0, 4.0];
        let data = u.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect();
        let m = Matrix::from_vec(4, 3, data).unwrap();
        let fit = nmf(&m, 1, 200, 3).unwrap();
        assert!(*fit.errors.last().unwrap() <= 1e-6);
    }

    #[test]
    fn k_larger_than_rows_is_rejected() {
        let m = Matrix::from_vec(2, 2, vec![1.0; 4]).unwrap();
        assert!(nmf(&m, 3, 10, 0).is_err());
    }
}
