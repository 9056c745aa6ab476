use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{epoch_order, AdamW, BeliefAdapter, Matrix, TrainConfig};
use crate::cohort::Label;
use crate::demographics::Group;
use crate::error::{Error, Result};
use crate::sim::macro_f1;

fn class_index(l: Label) -> usize {
    match l {
        Label::True => 0,
        Label::Fake => 1,
    }
}

/// Two-way linear classifier over `[h ; z_bel]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SusceptibilityHead {
    pub u: Matrix,
    pub c: Vec<f64>,
    pub d_emb: usize,
    pub d_bel: usize,
}

impl SusceptibilityHead {
    pub fn new(d_emb: usize, d_bel: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            u: Matrix::uniform_init(2, d_emb + d_bel, &mut rng),
            c: vec![0.0; 2],
            d_emb,
            d_bel,
        }
    }

    pub fn zeros(d_emb: usize, d_bel: usize) -> Self {
        Self {
            u: Matrix::zeros(2, d_emb + d_bel),
            c: vec![0.0; 2],
            d_emb,
            d_bel,
        }
    }

    fn input(&self, ex: &Phase2Example) -> Result<Vec<f64>> {
        if ex.h.len() != self.d_emb || ex.z_bel.len() != self.d_bel {
            return Err(Error::Shape(format!(
                "example dims ({}, {}) vs head ({}, {})",
                ex.h.len(),
                ex.z_bel.len(),
                self.d_emb,
                self.d_bel
            )));
        }
        Ok(ex.h.iter().chain(&ex.z_bel).copied().collect())
    }

    /// Class probabilities `[P(true), P(fake)]`.
    pub fn probs(&self, ex: &Phase2Example) -> Result<[f64; 2]> {
        let mut z = self.u.matvec(&self.input(ex)?)?;
        z.iter_mut().zip(&self.c).for_each(|(z, c)| *z += c);
        let m = z[0].max(z[1]);
        let (a, b) = ((z[0] - m).exp(), (z[1] - m).exp());
        Ok([a / (a + b), b / (a + b)])
    }

    /// Argmax label; ties go to `true`.
    pub fn predict(&self, ex: &Phase2Example) -> Result<Label> {
        let p = self.probs(ex)?;
        Ok(if p[0] >= p[1] { Label::True } else { Label::Fake })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase2Example {
    pub h: Vec<f64>,
    pub z_bel: Vec<f64>,
    pub label: Label,
    /// Group that produced `z_bel`, needed for swap perturbations.
    #[serde(default)]
    pub group: Option<Group>,
}

/// Mean cross-entropy over `batch` with gradients for `U` and `c`.
pub fn phase2_loss_and_grad(
    head: &SusceptibilityHead,
    batch: &[&Phase2Example],
) -> Result<(f64, Matrix, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Empty("phase-2 batch".into()));
    }
    let mut gu = Matrix::zeros(2, head.d_emb + head.d_bel);
    let mut gc = vec![0.0; 2];
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for ex in batch {
        let x = head.input(ex)?;
        let p = head.probs(ex)?;
        let y = class_index(ex.label);
        loss -= p[y].max(f64::MIN_POSITIVE).ln();
        let g = [p[0] - f64::from(y == 0), p[1] - f64::from(y == 1)];
        gu.add_outer(scale, &g, &x);
        gc[0] += scale * g[0];
        gc[1] += scale * g[1];
    }
    Ok((loss * scale, gu, gc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase2Epoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub train_macro_f1: f64,
    pub val_accuracy: Option<f64>,
    pub val_macro_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase2Outcome {
    pub head: SusceptibilityHead,
    pub epochs: Vec<Phase2Epoch>,
    pub steps: u64,
    pub config: TrainConfig,
}

fn evaluate(head: &SusceptibilityHead, set: &[Phase2Example]) -> Result<(f64, f64)> {
    let mut pairs = Vec::with_capacity(set.len());
    for ex in set {
        pairs.push((head.predict(ex)?, ex.label));
    }
    let acc = pairs.iter().filter(|(p, t)| p == t).count() as f64 / pairs.len() as f64;
    Ok((acc, macro_f1(&pairs, &mut Vec::new())))
}

/// Trains a fresh head with the adapter held fixed. The adapter must be frozen.
pub fn phase2_train(
    adapter: &BeliefAdapter,
    train: &[Phase2Example],
    val: &[Phase2Example],
    cfg: &TrainConfig,
) -> Result<Phase2Outcome> {
    if !adapter.frozen {
        return Err(Error::Training("phase 2 requires a frozen belief adapter".into()));
    }
    let first = train
        .first()
        .ok_or_else(|| Error::Empty("phase-2 training set".into()))?;
    let head = SusceptibilityHead::new(first.h.len(), first.z_bel.len(), cfg.seed);
    phase2_train_from(head, train, val, cfg)
}

pub fn phase2_train_from(
    mut head: SusceptibilityHead,
    train: &[Phase2Example],
    val: &[Phase2Example],
    cfg: &TrainConfig,
) -> Result<Phase2Outcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("phase-2 training set".into()));
    }
    let mut counts = [0usize; 2];
    for ex in train {
        counts[class_index(ex.label)] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::Training(format!(
            "training set has a single class (true: {}, fake: {})",
            counts[0], counts[1]
        )));
    }
    let mut opt = AdamW::new(cfg.optimizer, &[2 * (head.d_emb + head.d_bel), 2]);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xfeed);
    let mut epochs = Vec::new();
    for epoch in 0..cfg.epochs {
        let order = epoch_order(train.len(), &mut rng);
        let mut loss_sum = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Phase2Example> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, gu, gc) = phase2_loss_and_grad(&head, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite phase-2 loss at epoch {epoch}, batch {bi}"
                )));
            }
            loss_sum += loss * batch.len() as f64;
            let SusceptibilityHead { u, c, .. } = &mut head;
            opt.step(&mut [u.as_mut_slice(), c.as_mut_slice()], &[gu.as_slice(), &gc])
                .map_err(|e| Error::Training(format!("epoch {epoch}, batch {bi}: {e}")))?;
        }
        let (train_accuracy, train_macro_f1) = evaluate(&head, train)?;
        let (val_accuracy, val_macro_f1) = if val.is_empty() {
            (None, None)
        } else {
            let (a, f) = evaluate(&head, val)?;
            (Some(a), Some(f))
        };
        epochs.push(Phase2Epoch {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy,
            train_macro_f1,
            val_accuracy,
            val_macro_f1,
        });
    }
    Ok(Phase2Outcome {
        head,
        epochs,
        steps: opt.step,
        config: *cfg,
    })
}

/// How the belief part of each example is disturbed.
#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    /// Replace `z_bel` with zeros.
    ZeroOut,
    /// Replace `z_bel` with the swapped group's vector from this table.
    Swap(BTreeMap<Group, Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortcutMetrics {
    /// Fraction of examples whose predicted label changed.
    pub flip_rate: f64,
    /// Mean absolute change in the probability of the originally predicted class.
    pub prob_delta: f64,
    /// Accuracy before minus accuracy after.
    pub acc_drop: f64,
    pub before: Vec<Label>,
    pub after: Vec<Label>,
}

pub fn ft_shortcut_metrics(
    head: &SusceptibilityHead,
    eval: &[Phase2Example],
    perturbation: &Perturbation,
) -> Result<ShortcutMetrics> {
    if eval.is_empty() {
        return Err(Error::Empty("shortcut evaluation set".into()));
    }
    let (mut before, mut after) = (Vec::new(), Vec::new());
    let (mut delta, mut hits_before, mut hits_after) = (0.0, 0usize, 0usize);
    for ex in eval {
        let mut alt = ex.clone();
        alt.z_bel = match perturbation {
            Perturbation::ZeroOut => vec![0.0; ex.z_bel.len()],
            Perturbation::Swap(table) => {
                let g = ex.group.ok_or_else(|| {
                    Error::Validation("swap perturbation needs example groups".into())
                })?;
                table
                    .get(&g.swapped())
                    .cloned()
                    .ok_or_else(|| Error::unknown("group belief vector", g.swapped()))?
            }
        };
        let (p0, p1) = (head.probs(ex)?, head.probs(&alt)?);
        let l0 = if p0[0] >= p0[1] { Label::True } else { Label::Fake };
        let l1 = if p1[0] >= p1[1] { Label::True } else { Label::Fake };
        let k = class_index(l0);
        delta += (p1[k] - p0[k]).abs();
        hits_before += usize::from(l0 == ex.label);
        hits_after += usize::from(l1 == ex.label);
        before.push(l0);
        after.push(l1);
    }
    let n = eval.len() as f64;
    let flips = before.iter().zip(&after).filter(|(a, b)| a != b).count();
    Ok(ShortcutMetrics {
        flip_rate: flips as f64 / n,
        prob_delta: delta / n,
        acc_drop: (hits_before as f64 - hits_after as f64) / n,
        before,
        after,
    })
}
