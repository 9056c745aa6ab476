//! Belief adapter (phase 1) and susceptibility head (phase 2) trained with a
//! hand-written AdamW over precomputed text embeddings.

mod io;
mod linalg;
mod optim;
mod phase1;
mod phase2;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use io::{Checkpoint, CheckpointBody, EmbeddingTable, CHECKPOINT_VERSION};
pub use linalg::Matrix;
pub use optim::{AdamW, AdamWConfig};
pub use phase1::{
    belief_embedding, phase1_batch_loss, phase1_loss_and_grad, phase1_text, phase1_train,
    phase1_train_from, BeliefAdapter, Phase1Example, Phase1Outcome, ProbeQuestion, D_BEL,
};
pub use phase2::{
    ft_shortcut_metrics, phase2_loss_and_grad, phase2_train, phase2_train_from, Perturbation, Phase2Epoch,
    Phase2Example, Phase2Outcome, ShortcutMetrics, SusceptibilityHead,
};

use crate::error::{Error, Result};

/// Number of adapter output bins; the largest supported scale.
pub const N_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: AdamWConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn phase1() -> Self {
        Self {
            optimizer: AdamWConfig::default(),
            batch_size: 16,
            epochs: 2,
            seed: 0,
        }
    }

    pub fn phase2() -> Self {
        Self {
            batch_size: 8,
            ..Self::phase1()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Softmax over the first `k` logits; bins `k..` are exactly zero.
pub fn masked_softmax(logits: &[f64], k: usize) -> Result<Vec<f64>> {
    if !(2..=N_BINS).contains(&k) {
        return Err(Error::Validation(format!("valid bin count {k} outside 2..=10")));
    }
    if logits.len() != N_BINS {
        return Err(Error::Shape(format!("expected {N_BINS} logits, got {}", logits.len())));
    }
    let max = logits[..k].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![0.0; N_BINS];
    let mut total = 0.0;
    for i in 0..k {
        out[i] = (logits[i] - max).exp();
        total += out[i];
    }
    for x in &mut out[..k] {
        *x /= total;
    }
    Ok(out)
}

/// Shuffled epoch order of `n` items.
pub(crate) fn epoch_order(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

/// Deterministic split of distinct keys into (train, held-out) sets.
///
/// The train side gets `round(train_frac * n)` keys.
pub fn split_keys<T: Ord + Clone>(keys: impl IntoIterator<Item = T>, train_frac: f64, seed: u64) -> (BTreeSet<T>, BTreeSet<T>) {
    let uniq: BTreeSet<T> = keys.into_iter().collect();
    let mut v: Vec<T> = uniq.into_iter().collect();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_frac.clamp(0.0, 1.0) * v.len() as f64).round() as usize;
    let test = v.split_off(n_train);
    (v.into_iter().collect(), test.into_iter().collect())
}
