//! Divergences and entropies over categorical distributions.
//!
//! KL is reported in nats, JS and Shannon entropy in bits.

use crate::error::{Error, Result};

/// Additive smoothing applied to the reference distribution before KL.
pub const KL_SMOOTHING: f64 = 1e-9;

/// `KL(p || q)` in nats with the default smoothing of `q`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    kl_divergence_smoothed(p, q, KL_SMOOTHING)
}

/// `KL(p || q)` in nats after adding `eps` to every bin of `q` and renormalizing.
///
/// Terms with `p_i = 0` contribute zero.
pub fn kl_divergence_smoothed(p: &[f64], q: &[f64], eps: f64) -> Result<f64> {
    check_lengths(p, q)?;
    let total: f64 = q.iter().map(|&x| x + eps).sum();
    let kl = p
        .iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / ((qi + eps) / total)).ln())
        .sum::<f64>();
    Ok(kl.max(0.0))
}

/// Jensen-Shannon divergence in bits; symmetric and bounded by 1.
pub fn js_divergence_bits(p: &[f64], q: &[f64]) -> Result<f64> {
    check_lengths(p, q)?;
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a + b) / 2.0).collect();
    let js = 0.5 * kl_bits_unsmoothed(p, &m) + 0.5 * kl_bits_unsmoothed(q, &m);
    Ok(js.clamp(0.0, 1.0))
}

fn kl_bits_unsmoothed(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &mi)| pi * (pi / mi).log2())
        .sum()
}

/// Shannon entropy in bits of a probability vector.
pub fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.log2())
        .sum::<f64>()
}

fn check_lengths(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(())
}
