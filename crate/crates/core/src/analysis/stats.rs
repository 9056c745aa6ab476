//! Paired t-test and pooled two-proportion z-test, both two-sided.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degenerate {
    /// Every paired difference is zero.
    NoDifference,
    /// Differences are constant but nonzero; the statistic is infinite.
    ZeroVariance,
    /// Pooled proportion is 0 or 1, so the standard error vanishes.
    PooledBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub degenerate: Option<Degenerate>,
}

impl TestOutcome {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// t statistic on `a[i] - b[i]` with `n - 1` degrees of freedom.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TestOutcome> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Validation(format!("paired t-test needs 2+ pairs, got {n}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("paired t-test input".into()));
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    if d.iter().all(|x| *x == d[0]) {
        return Ok(if d[0] == 0.0 {
            TestOutcome {
                statistic: 0.0,
                p_value: 1.0,
                degenerate: Some(Degenerate::NoDifference),
            }
        } else {
            TestOutcome {
                statistic: f64::INFINITY.copysign(d[0]),
                p_value: 0.0,
                degenerate: Some(Degenerate::ZeroVariance),
            }
        });
    }
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("df >= 1");
    Ok(TestOutcome {
        statistic: t,
        p_value: (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0),
        degenerate: None,
    })
}

/// z statistic for `k1/n1 - k2/n2` under the pooled-variance null.
pub fn two_proportion_z_test(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<TestOutcome> {
    if n1 == 0 || n2 == 0 || k1 > n1 || k2 > n2 {
        return Err(Error::Validation(format!(
            "need 0 <= k <= n and n > 0, got {k1}/{n1} and {k2}/{n2}"
        )));
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (k1 + k2) as f64 / (n1f + n2f);
    if pooled == 0.0 || pooled == 1.0 {
        return Ok(TestOutcome {
            statistic: 0.0,
            p_value: 1.0,
            degenerate: Some(Degenerate::PooledBoundary),
        });
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let z = (k1 as f64 / n1f - k2 as f64 / n2f) / se;
    let normal = Normal::standard();
    Ok(TestOutcome {
        statistic: z,
        p_value: (2.0 * normal.sf(z.abs())).clamp(0.0, 1.0),
        degenerate: None,
    })
}
