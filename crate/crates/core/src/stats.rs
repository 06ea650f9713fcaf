//! Local feature statistics: Gaussian local means, a channel-averaged local
//! RMS contrast map, per-stage channel normalization of the means, and a
//! sigmoid weighting map over standardized contrast.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::correlate_channels;
use crate::pyramid::FusedFeatureMap;
use crate::scalar::Real;

pub const DEFAULT_K: u32 = 5;
pub const DEFAULT_DELTA: f64 = 1e-12;

/// How the contrast map is formed from local second moments.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastMode {
    /// `mean_c sqrt(G * F^2)`: uncentered local RMS.
    #[default]
    UncenteredRms,
    /// `mean_c sqrt(G * F^2 - (G * F)^2)`: centered local standard deviation.
    CenteredStd,
}

/// Which contrast statistic drives the weighting map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFeature {
    #[default]
    Std,
    /// Squares the contrast map before standardizing.
    Variance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig<T> {
    pub k: u32,
    pub delta: T,
    pub contrast: ContrastMode,
    pub weight_feature: WeightFeature,
}

impl<T: Real> Default for StatsConfig<T> {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            delta: T::lit(DEFAULT_DELTA),
            contrast: ContrastMode::default(),
            weight_feature: WeightFeature::default(),
        }
    }
}

/// Output of [`compute_stats`].
#[derive(Clone, Debug, PartialEq)]
pub struct StatBundle<T> {
    /// Channel-normalized local means, `C x H x W`.
    pub f_mu_norm: Array3<T>,
    /// Contrast map, `H x W`, nonnegative.
    pub f_sigma: Array2<T>,
    /// Weights in `(0, 1)`, `H x W`.
    pub weight_map: Array2<T>,
    /// Odd Gaussian window side.
    pub window: usize,
}

/// Window side `max(3, 1 + 2 * floor(min(h, w) / 2^k))`.
pub fn dynamic_window(h: usize, w: usize, k: u32) -> usize {
    let side = h.min(w) >> k.min(usize::BITS - 1);
    (1 + 2 * side).max(3)
}

/// Sampled isotropic Gaussian on an `s_w x s_w` grid, normalized to sum 1.
///
/// # Panics
/// If `s_w` is even or below 3, or `sigma` is not positive.
pub fn gaussian_kernel<T: Real>(s_w: usize, sigma: T) -> Array2<T> {
    assert!(
        s_w >= 3 && s_w % 2 == 1,
        "window must be odd and at least 3"
    );
    assert!(sigma > T::zero(), "sigma must be positive");
    let half = (s_w / 2) as isize;
    let two_var = T::lit(2.0) * sigma * sigma;
    // Separable construction keeps the kernel exactly symmetric.
    let taps: Vec<T> = (-half..=half)
        .map(|d| {
            let d = T::lit(d as f64);
            (-(d * d) / two_var).exp()
        })
        .collect();
    let mut kernel = Array2::from_shape_fn((s_w, s_w), |(y, x)| taps[y] * taps[x]);
    let total = kernel.sum();
    kernel.mapv_inplace(|v| v / total);
    kernel
}

fn check_fits(kernel: ArrayView2<'_, impl Real>, h: usize, w: usize) -> Result<()> {
    let side = kernel.dim().0.max(kernel.dim().1);
    if side / 2 >= h || side / 2 >= w {
        return Err(Error::KernelLargerThanMap {
            kernel: side,
            height: h,
            width: w,
        });
    }
    Ok(())
}

/// Per-channel stride-1 Gaussian filtering with reflection padding.
pub fn local_mean<T: Real>(f_m: ArrayView3<'_, T>, kernel: ArrayView2<'_, T>) -> Result<Array3<T>> {
    let (_, h, w) = f_m.dim();
    check_fits(kernel, h, w)?;
    Ok(correlate_channels(f_m, kernel, 1))
}

/// `mean_c sqrt(conv(F^2))`: the uncentered local RMS averaged over channels.
pub fn local_rms<T: Real>(f_m: ArrayView3<'_, T>, kernel: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let (c, h, w) = f_m.dim();
    check_fits(kernel, h, w)?;
    let squared = f_m.mapv(|v| v * v);
    let second = correlate_channels(squared.view(), kernel, 1);
    Ok(channel_mean_sqrt(second, None, c))
}

/// Centered variant: `mean_c sqrt(conv(F^2) - conv(F)^2)`, clamped at zero.
pub fn local_std<T: Real>(f_m: ArrayView3<'_, T>, kernel: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let (c, h, w) = f_m.dim();
    check_fits(kernel, h, w)?;
    let first = correlate_channels(f_m, kernel, 1);
    let squared = f_m.mapv(|v| v * v);
    let second = correlate_channels(squared.view(), kernel, 1);
    Ok(channel_mean_sqrt(second, Some(first.view()), c))
}

fn channel_mean_sqrt<T: Real>(
    second: Array3<T>,
    first: Option<ArrayView3<'_, T>>,
    c: usize,
) -> Array2<T> {
    let (_, h, w) = second.dim();
    let mut out = Array2::<T>::zeros((h, w));
    for (ch, plane) in second.axis_iter(Axis(0)).enumerate() {
        match first {
            Some(mu) => Zip::from(&mut out)
                .and(plane)
                .and(mu.index_axis(Axis(0), ch))
                .for_each(|o, &s, &m| *o += (s - m * m).max(T::zero()).sqrt()),
            // Filtering can leave -0.0 or tiny negatives on exact zeros.
            None => Zip::from(&mut out)
                .and(plane)
                .for_each(|o, &s| *o += s.max(T::zero()).sqrt()),
        }
    }
    let n = T::of_usize(c);
    out.mapv_inplace(|v| v / n);
    out
}

/// Normalize every stage's channel sub-vector to unit Euclidean length at
/// each spatial position. Zero sub-vectors stay zero.
pub fn channel_normalize<T: Real>(
    f_mu: ArrayView3<'_, T>,
    layer_blocks: &[(usize, usize)],
) -> Array3<T> {
    let mut out = f_mu.to_owned();
    let (_, h, w) = out.dim();
    for &(offset, len) in layer_blocks {
        let mut block = out.slice_mut(ndarray::s![offset..offset + len, .., ..]);
        for y in 0..h {
            for x in 0..w {
                let mut lane = block.slice_mut(ndarray::s![.., y, x]);
                let norm = lane.iter().map(|v| *v * *v).sum::<T>().sqrt();
                if norm > T::zero() {
                    lane.mapv_inplace(|v| v / norm);
                }
            }
        }
    }
    out
}

#[inline]
fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Population mean and standard deviation, computed about the first value so
/// that a constant map yields exactly its value and zero spread.
pub(crate) fn shifted_moments<'a, T: Real>(values: impl Iterator<Item = &'a T> + Clone) -> (T, T) {
    let mut it = values.clone();
    let Some(&pivot) = it.next() else {
        return (T::zero(), T::zero());
    };
    let n = T::of_usize(values.clone().count());
    let mean = pivot + values.clone().map(|v| *v - pivot).sum::<T>() / n;
    let var = values.map(|v| (*v - mean) * (*v - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

/// Logistic of the standardized map, `1 / (1 + exp(-(F - mean) / (std + delta)))`.
/// Values that saturate in floating point are clamped into the open unit interval.
pub fn weighting_map<T: Real>(f_sigma: ArrayView2<'_, T>, delta: T) -> Array2<T> {
    let (mean, std) = shifted_moments(f_sigma.iter());
    let scale = std + delta;
    let lo = T::min_positive_value();
    let hi = T::one() - T::epsilon() / T::lit(2.0);
    f_sigma.mapv(|v| sigmoid((v - mean) / scale).max(lo).min(hi))
}

/// Full statistics for a fused map with the default contrast and weighting.
pub fn compute_stats<T: Real>(f_m: &FusedFeatureMap<T>, k: u32, delta: T) -> Result<StatBundle<T>> {
    compute_stats_with(
        f_m,
        &StatsConfig {
            k,
            delta,
            ..StatsConfig::default()
        },
    )
}

pub fn compute_stats_with<T: Real>(
    f_m: &FusedFeatureMap<T>,
    config: &StatsConfig<T>,
) -> Result<StatBundle<T>> {
    let window = dynamic_window(f_m.height(), f_m.width(), config.k);
    let kernel = gaussian_kernel(window, T::of_usize(window) / T::lit(6.0));
    let f_mu = local_mean(f_m.data.view(), kernel.view())?;
    let f_sigma = match config.contrast {
        ContrastMode::UncenteredRms => local_rms(f_m.data.view(), kernel.view())?,
        ContrastMode::CenteredStd => local_std(f_m.data.view(), kernel.view())?,
    };
    let weight_map = match config.weight_feature {
        WeightFeature::Std => weighting_map(f_sigma.view(), config.delta),
        WeightFeature::Variance => weighting_map(f_sigma.mapv(|v| v * v).view(), config.delta),
    };
    let f_mu_norm = channel_normalize(f_mu.view(), &f_m.layer_blocks);
    Ok(StatBundle {
        f_mu_norm,
        f_sigma,
        weight_map,
        window,
    })
}
