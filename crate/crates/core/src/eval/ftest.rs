//! Variance-ratio significance test between two models' residuals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MIN_RESIDUALS: usize = 10;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Better {
    A,
    B,
    Tie,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FTestResult {
    pub better: Better,
    /// `var(a) / var(b)`.
    pub f_stat: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

fn sample_variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Two-sided F-test on residual variances with `(n - 1, n - 1)` degrees of
/// freedom. The model with the smaller residual variance wins when
/// `p < alpha`.
pub fn f_test<T: Real>(residuals_a: &[T], residuals_b: &[T], alpha: f64) -> Result<FTestResult> {
    if residuals_a.len() != residuals_b.len() {
        return Err(Error::LengthMismatch {
            left: residuals_a.len(),
            right: residuals_b.len(),
        });
    }
    let n = residuals_a.len();
    if n < MIN_RESIDUALS {
        return Err(Error::TooFewSamples {
            n,
            min: MIN_RESIDUALS,
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let a: Vec<f64> = residuals_a.iter().map(|v| v.as_f64()).collect();
    let b: Vec<f64> = residuals_b.iter().map(|v| v.as_f64()).collect();
    let (va, vb) = (sample_variance(&a), sample_variance(&b));
    if va == 0.0 && vb == 0.0 {
        return Ok(FTestResult {
            better: Better::Tie,
            f_stat: 1.0,
            p_value: 1.0,
        });
    }
    if vb == 0.0 {
        return Ok(FTestResult {
            better: Better::B,
            f_stat: f64::INFINITY,
            p_value: 0.0,
        });
    }
    let f_stat = va / vb;
    let df = (n - 1) as f64;
    let dist = FisherSnedecor::new(df, df).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let lower = dist.cdf(f_stat);
    let p_value = (2.0 * lower.min(1.0 - lower)).min(1.0);
    let better = if p_value >= alpha {
        Better::Tie
    } else if va < vb {
        Better::A
    } else {
        Better::B
    };
    Ok(FTestResult {
        better,
        f_stat,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residuals(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0)
            .collect()
    }

    #[test]
    fn identical_is_tie() {
        let r = residuals(40);
        let t = f_test(&r, &r, DEFAULT_ALPHA).unwrap();
        assert_eq!(t.better, Better::Tie);
        assert_eq!(t.f_stat, 1.0);
        assert!((t.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tenfold_residuals_lose() {
        let a = residuals(100);
        let b: Vec<f64> = a.iter().map(|v| 10.0 * v).collect();
        let t = f_test(&a, &b, DEFAULT_ALPHA).unwrap();
        assert_eq!(t.better, Better::A);
        assert!((t.f_stat - 0.01).abs() < 1e-12);
        let t = f_test(&b, &a, DEFAULT_ALPHA).unwrap();
        assert_eq!(t.better, Better::B);
    }

    #[test]
    fn symmetric_p_value() {
        let a = residuals(30);
        let b: Vec<f64> = a.iter().map(|v| 1.3 * v + 0.2).collect();
        let ab = f_test(&a, &b, DEFAULT_ALPHA).unwrap();
        let ba = f_test(&b, &a, DEFAULT_ALPHA).unwrap();
        assert!((ab.p_value - ba.p_value).abs() < 1e-10);
    }

    #[test]
    fn guards() {
        let r = residuals(5);
        assert!(matches!(
            f_test(&r, &r, DEFAULT_ALPHA),
            Err(Error::TooFewSamples { n: 5, .. })
        ));
        assert!(matches!(
            f_test(&residuals(12), &r, DEFAULT_ALPHA),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
