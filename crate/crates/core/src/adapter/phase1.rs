use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{epoch_order, masked_softmax, AdamW, Matrix, TrainConfig, N_BINS};
use crate::belief_store::BeliefDimension;
use crate::demographics::Group;
use crate::error::{Error, Result};

/// Width of the belief embedding: one padded distribution per dimension.
pub const D_BEL: usize = BeliefDimension::ALL.len() * N_BINS;

/// Text embedded to represent one (group, survey question) pair.
pub fn phase1_text(group: Group, question_text: &str) -> String {
    format!("Demographic: {}. Question: {question_text}", group.phrase())
}

/// Linear map from a text embedding to 10 bin logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefAdapter {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub d_emb: usize,
    pub frozen: bool,
}

impl BeliefAdapter {
    pub fn new(d_emb: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            w: Matrix::uniform_init(N_BINS, d_emb, &mut rng),
            b: vec![0.0; N_BINS],
            d_emb,
            frozen: false,
        }
    }

    pub fn zeros(d_emb: usize) -> Self {
        Self {
            w: Matrix::zeros(N_BINS, d_emb),
            b: vec![0.0; N_BINS],
            d_emb,
            frozen: false,
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn logits(&self, h: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.w.matvec(h)?;
        z.iter_mut().zip(&self.b).for_each(|(z, b)| *z += b);
        Ok(z)
    }

    /// Predicted distribution over `k` valid bins, zero-padded to 10.
    pub fn predict(&self, h: &[f64], k: usize) -> Result<Vec<f64>> {
        masked_softmax(&self.logits(h)?, k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase1Example {
    pub embedding: Vec<f64>,
    /// Empirical distribution over the `k` valid bins.
    pub target: Vec<f64>,
    pub k: usize,
}

impl Phase1Example {
    pub fn new(embedding: Vec<f64>, target: Vec<f64>) -> Result<Self> {
        let k = target.len();
        if !(2..=N_BINS).contains(&k) {
            return Err(Error::Validation(format!("target has {k} bins, need 2..=10")));
        }
        Ok(Self {
            embedding,
            target,
            k,
        })
    }
}

/// `ln softmax(z[..k])`, computed stably.
fn log_softmax(z: &[f64], k: usize) -> Vec<f64> {
    let max = z[..k].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z[..k].iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    z[..k].iter().map(|x| x - lse).collect()
}

fn example_kl(adapter: &BeliefAdapter, ex: &Phase1Example) -> Result<(f64, Vec<f64>)> {
    if ex.target.len() != ex.k || !(2..=N_BINS).contains(&ex.k) {
        return Err(Error::Shape(format!(
            "example with k={} has {} target bins",
            ex.k,
            ex.target.len()
        )));
    }
    let z = adapter.logits(&ex.embedding)?;
    let logp = log_softmax(&z, ex.k);
    let kl = ex
        .target
        .iter()
        .zip(&logp)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, lq)| p * (p.ln() - lq))
        .sum();
    Ok((kl, logp))
}

/// Mean KL(target || prediction) over `batch`, without gradients.
pub fn phase1_batch_loss(adapter: &BeliefAdapter, batch: &[Phase1Example]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("phase-1 batch".into()));
    }
    let mut total = 0.0;
    for ex in batch {
        total += example_kl(adapter, ex)?.0;
    }
    Ok(total / batch.len() as f64)
}

/// Mean KL over `batch` with gradients for `W` and `b`.
///
/// For valid bins the logit gradient is `p - P`; padded bins get none.
pub fn phase1_loss_and_grad(
    adapter: &BeliefAdapter,
    batch: &[&Phase1Example],
) -> Result<(f64, Matrix, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Empty("phase-1 batch".into()));
    }
    let mut gw = Matrix::zeros(N_BINS, adapter.d_emb);
    let mut gb = vec![0.0; N_BINS];
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for ex in batch {
        let (kl, logp) = example_kl(adapter, ex)?;
        loss += kl;
        let mut g = vec![0.0; N_BINS];
        let target_mass: f64 = ex.target.iter().sum();
        for i in 0..ex.k {
            g[i] = logp[i].exp() * target_mass - ex.target[i];
        }
        gw.add_outer(scale, &g, &ex.embedding);
        gb.iter_mut().zip(&g).for_each(|(a, b)| *a += scale * b);
    }
    Ok((loss * scale, gw, gb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase1Outcome {
    pub adapter: BeliefAdapter,
    /// Mean training KL before training and after each epoch.
    pub train_curve: Vec<f64>,
    /// Same for the validation set, when one was given.
    pub val_curve: Vec<f64>,
    pub steps: u64,
    pub config: TrainConfig,
}

fn check_examples(examples: &[Phase1Example], d_emb: usize) -> Result<()> {
    for (i, ex) in examples.iter().enumerate() {
        if ex.embedding.len() != d_emb {
            return Err(Error::Shape(format!(
                "example {i} has embedding dim {}, adapter expects {d_emb}",
                ex.embedding.len()
            )));
        }
    }
    Ok(())
}

/// Fits a freshly initialized adapter; the result comes back frozen.
pub fn phase1_train(
    train: &[Phase1Example],
    val: &[Phase1Example],
    cfg: &TrainConfig,
) -> Result<Phase1Outcome> {
    let d = train
        .first()
        .map(|e| e.embedding.len())
        .ok_or_else(|| Error::Empty("phase-1 training set".into()))?;
    phase1_train_from(BeliefAdapter::new(d, cfg.seed), train, val, cfg)
}

/// Fits `adapter` starting from its current parameters.
pub fn phase1_train_from(
    mut adapter: BeliefAdapter,
    train: &[Phase1Example],
    val: &[Phase1Example],
    cfg: &TrainConfig,
) -> Result<Phase1Outcome> {
    cfg.validate()?;
    if adapter.frozen {
        return Err(Error::Training("adapter is frozen".into()));
    }
    if train.is_empty() {
        return Err(Error::Empty("phase-1 training set".into()));
    }
    check_examples(train, adapter.d_emb)?;
    check_examples(val, adapter.d_emb)?;

    let mut opt = AdamW::new(cfg.optimizer, &[N_BINS * adapter.d_emb, N_BINS]);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut train_curve = vec![phase1_batch_loss(&adapter, train)?];
    let mut val_curve = Vec::new();
    if !val.is_empty() {
        val_curve.push(phase1_batch_loss(&adapter, val)?);
    }
    for epoch in 0..cfg.epochs {
        let order = epoch_order(train.len(), &mut rng);
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Phase1Example> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, gw, gb) = phase1_loss_and_grad(&adapter, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite phase-1 loss at epoch {epoch}, batch {bi} (examples {chunk:?}, step {})",
                    opt.step
                )));
            }
            let BeliefAdapter { w, b, .. } = &mut adapter;
            opt.step(&mut [w.as_mut_slice(), b.as_mut_slice()], &[gw.as_slice(), &gb])
                .map_err(|e| Error::Training(format!("epoch {epoch}, batch {bi}: {e}")))?;
        }
        train_curve.push(phase1_batch_loss(&adapter, train)?);
        if !val.is_empty() {
            val_curve.push(phase1_batch_loss(&adapter, val)?);
        }
    }
    adapter.freeze();
    Ok(Phase1Outcome {
        adapter,
        train_curve,
        val_curve,
        steps: opt.step,
        config: *cfg,
    })
}

/// A survey question's embedding for one demographic group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeQuestion {
    pub qid: String,
    pub dimension: BeliefDimension,
    pub k: usize,
    pub embedding: Vec<f64>,
}

/// Per-dimension mean of the adapter's padded predictions, concatenated in
/// dimension order (70 values). Dimensions without probes give zeros and a
/// warning.
pub fn belief_embedding(
    adapter: &BeliefAdapter,
    probes: &[ProbeQuestion],
) -> Result<(Vec<f64>, Vec<String>)> {
    if !adapter.frozen {
        return Err(Error::Training("belief embedding needs a frozen adapter".into()));
    }
    let mut z = vec![0.0; D_BEL];
    let mut warnings = Vec::new();
    for d in BeliefDimension::ALL {
        let block = &mut z[d.index() * N_BINS..(d.index() + 1) * N_BINS];
        let qs: Vec<&ProbeQuestion> = probes.iter().filter(|p| p.dimension == d).collect();
        if qs.is_empty() {
            warnings.push(format!("no probe questions for {}; block left at zero", d.label()));
            continue;
        }
        for q in &qs {
            let p = adapter.predict(&q.embedding, q.k)?;
            block.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
        }
        block.iter_mut().for_each(|x| *x /= qs.len() as f64);
    }
    Ok((z, warnings))
}
