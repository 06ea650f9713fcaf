//! Multivariate Gaussian models of feature samples and the distance used as
//! the quality score.

mod persist;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, forward_substitute, pinv_quadratic_form};
use crate::scalar::Real;

pub use persist::{load_model, save_model, save_model_stamped, ModelFile, FORMAT_VERSION, MAGIC};

/// Where a model came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    Benchmark,
    Test,
}

/// Mean and covariance of an `l`-dimensional Gaussian plus provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct MvgModel<T> {
    pub mean: Array1<T>,
    pub cov: Array2<T>,
    pub dim: usize,
    pub sample_count: usize,
    /// Hash of the backbone and feature configuration the samples came from.
    pub config_hash: String,
    pub source: ModelSource,
}

impl<T: Real> MvgModel<T> {
    pub fn new(
        mean: Array1<T>,
        cov: Array2<T>,
        sample_count: usize,
        config_hash: impl Into<String>,
        source: ModelSource,
    ) -> Result<Self> {
        let model = Self {
            dim: mean.len(),
            mean,
            cov,
            sample_count,
            config_hash: config_hash.into(),
            source,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_provenance(mut self, config_hash: impl Into<String>, source: ModelSource) -> Self {
        self.config_hash = config_hash.into();
        self.source = source;
        self
    }

    /// Shape, finiteness and symmetry checks.
    pub fn validate(&self) -> Result<()> {
        let l = self.dim;
        if self.mean.len() != l {
            return Err(Error::DimMismatch {
                expected: l,
                got: self.mean.len(),
            });
        }
        if self.cov.dim() != (l, l) {
            return Err(Error::DimMismatch {
                expected: l,
                got: self.cov.nrows(),
            });
        }
        if self
            .mean
            .iter()
            .chain(self.cov.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidFormat(
                "model contains non-finite values".into(),
            ));
        }
        let scale = self.cov.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let tol = T::lit(1e-10) * scale.max(T::min_positive_value());
        for i in 0..l {
            for j in 0..i {
                if (self.cov[(i, j)] - self.cov[(j, i)]).abs() > tol {
                    return Err(Error::InvalidFormat(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn trace(&self) -> T {
        self.cov.diag().sum()
    }
}

/// `n` feature vectors of length `l`, optionally weighted.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix<T> {
    pub rows: Array2<T>,
    pub weights: Option<Array1<T>>,
}

impl<T: Real> SampleMatrix<T> {
    pub fn new(rows: Array2<T>, weights: Option<Array1<T>>) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::EmptySample);
        }
        if let Some(w) = &weights {
            if w.len() != rows.nrows() {
                return Err(Error::LengthMismatch {
                    left: rows.nrows(),
                    right: w.len(),
                });
            }
            if w.iter().any(|v| !v.is_finite() || *v < T::zero()) {
                return Err(Error::InvalidWeights(
                    "weights must be finite and nonnegative".into(),
                ));
            }
            if !(w.sum() > T::zero()) {
                return Err(Error::InvalidWeights("weights sum to zero".into()));
            }
        }
        Ok(Self { rows, weights })
    }

    pub fn unweighted(rows: Array2<T>) -> Result<Self> {
        Self::new(rows, None)
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }
}

/// Weighted first and second central moments, mergeable in a fixed order.
///
/// Each batch is reduced with an exact two-pass pass (mean, then centered
/// outer products); batches are combined with the pairwise update
/// `C = C_a + C_b + d d^T W_a W_b / W`, `d = mean_b - mean_a`. Merging the
/// same batches in the same order always produces identical bits.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentAccumulator<T> {
    pub dim: usize,
    pub count: usize,
    pub weight: T,
    pub mean: Array1<T>,
    /// Unnormalized centered second moment `sum w (x - mean)(x - mean)^T`.
    pub comoment: Array2<T>,
}

impl<T: Real> MomentAccumulator<T> {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            count: 0,
            weight: T::zero(),
            mean: Array1::zeros(dim),
            comoment: Array2::zeros((dim, dim)),
        }
    }

    pub fn from_samples(samples: &SampleMatrix<T>) -> Self {
        let x = &samples.rows;
        let n = x.nrows();
        let (weight, mean) = match &samples.weights {
            None => {
                let total = T::of_usize(n);
                (total, x.sum_axis(Axis(0)) / total)
            }
            Some(w) => {
                let total = w.sum();
                let weighted = x * &w.view().insert_axis(Axis(1));
                (total, weighted.sum_axis(Axis(0)) / total)
            }
        };
        let centered = x - &mean.view().insert_axis(Axis(0));
        let comoment = match &samples.weights {
            None => centered.t().dot(&centered),
            Some(w) => {
                let scaled = &centered * &w.view().insert_axis(Axis(1));
                scaled.t().dot(&centered)
            }
        };
        Self {
            dim: x.ncols(),
            count: n,
            weight,
            mean,
            comoment: symmetrize(comoment.view()),
        }
    }

    /// Fold `other` into `self`; `self` is the earlier batch.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        let total = self.weight + other.weight;
        let delta = &other.mean - &self.mean;
        let mean = &self.mean + &(&delta * (other.weight / total));
        let factor = self.weight * other.weight / total;
        let col = delta.view().insert_axis(Axis(1));
        let outer = col.dot(&col.t()) * factor;
        self.comoment = &self.comoment + &other.comoment + &outer;
        self.mean = mean;
        self.weight = total;
        self.count += other.count;
        Ok(())
    }

    /// Normalize by the total weight (maximum-likelihood covariance).
    pub fn finish(
        &self,
        config_hash: impl Into<String>,
        source: ModelSource,
    ) -> Result<MvgModel<T>> {
        if self.count == 0 || !(self.weight > T::zero()) {
            return Err(Error::EmptySample);
        }
        let cov = symmetrize((&self.comoment / self.weight).view());
        MvgModel::new(self.mean.clone(), cov, self.count, config_hash, source)
    }
}

fn symmetrize<T: Real>(a: ArrayView2<'_, T>) -> Array2<T> {
    let half = T::lit(0.5);
    Array2::from_shape_fn(a.dim(), |(i, j)| {
        if i == j {
            a[(i, j)]
        } else {
            (a[(i, j)] + a[(j, i)]) * half
        }
    })
}

/// Maximum-likelihood mean and covariance of the (weighted) samples.
/// Provenance is left blank; set it with [`MvgModel::with_provenance`].
pub fn fit_mvg<T: Real>(samples: &SampleMatrix<T>) -> Result<MvgModel<T>> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    MomentAccumulator::from_samples(samples).finish("", ModelSource::Test)
}

/// Ridge of `rel * trace(pooled) / l` for the pooled covariance of two models.
pub fn relative_ridge<T: Real>(a: &MvgModel<T>, b: &MvgModel<T>, rel: T) -> T {
    let l = T::of_usize(a.dim.max(1));
    rel * (a.trace() + b.trace()) / (T::lit(2.0) * l)
}

/// `sqrt((mu_d - mu_r)^T ((S_d + S_r) / 2 + ridge I)^-1 (mu_d - mu_r))`.
///
/// The pooled matrix is factored with Cholesky; if that fails the quadratic
/// form falls back to an eigenvalue-clamped pseudo-inverse.
pub fn mvg_distance<T: Real>(test: &MvgModel<T>, benchmark: &MvgModel<T>, ridge: T) -> Result<T> {
    if test.dim != benchmark.dim {
        return Err(Error::DimMismatch {
            expected: benchmark.dim,
            got: test.dim,
        });
    }
    if test.config_hash != benchmark.config_hash {
        return Err(Error::ConfigMismatch {
            expected: benchmark.config_hash.clone(),
            got: test.config_hash.clone(),
        });
    }
    let diff = &test.mean - &benchmark.mean;
    if diff.iter().all(|v| *v == T::zero()) {
        return Ok(T::zero());
    }
    let half = T::lit(0.5);
    let mut pooled = (&test.cov + &benchmark.cov) * half;
    for i in 0..pooled.nrows() {
        pooled[(i, i)] += ridge;
    }
    let tol = T::of_usize(test.dim) * T::epsilon();
    let quad = if test.dim == 1 && pooled[(0, 0)] > T::zero() {
        diff[0] * diff[0] / pooled[(0, 0)]
    } else if let Some(l) = cholesky(pooled.view()) {
        let y = forward_substitute(l.view(), diff.view());
        y.dot(&y)
    } else {
        pinv_quadratic_form(pooled.view(), diff.view(), tol).ok_or(Error::SingularCovariance)?
    };
    let dist = quad.max(T::zero()).sqrt();
    if !dist.is_finite() {
        return Err(Error::SingularCovariance);
    }
    Ok(dist)
}
