use std::fmt;
use std::str::FromStr;

use ndarray::{Array3, ArrayView3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::reflect_index;
use crate::scalar::Real;

pub const DEFAULT_NOISE_SEED: u64 = 0x5eed;
const BLOCK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationKind {
    /// Separable Gaussian blur with `sigma = level` pixels.
    GaussianBlur,
    /// Additive Gaussian noise with `sigma = level`, clipped to `[0, 1]`.
    WhiteNoise,
    /// Blend toward 8x8 block means with weight `1 - exp(-level)`.
    JpegLikeBlockAvg,
}

impl DegradationKind {
    pub const ALL: [DegradationKind; 3] = [
        DegradationKind::GaussianBlur,
        DegradationKind::WhiteNoise,
        DegradationKind::JpegLikeBlockAvg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DegradationKind::GaussianBlur => "gaussian_blur",
            DegradationKind::WhiteNoise => "white_noise",
            DegradationKind::JpegLikeBlockAvg => "jpeg_like_block_avg",
        }
    }
}

impl fmt::Display for DegradationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DegradationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownKind(s.to_string()))
    }
}

/// Apply a degradation of the given severity. `seed` only affects noise.
pub fn degrade<T: Real>(
    image: ArrayView3<'_, T>,
    kind: DegradationKind,
    level: f64,
    seed: u64,
) -> Result<Array3<T>> {
    if !(level > 0.0 && level.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "level must be positive, got {level}"
        )));
    }
    Ok(match kind {
        DegradationKind::GaussianBlur => gaussian_blur(image, level),
        DegradationKind::WhiteNoise => white_noise(image, level, seed),
        DegradationKind::JpegLikeBlockAvg => jpeg_like_block_avg(image, level),
    })
}

fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

pub fn gaussian_blur<T: Real>(image: ArrayView3<'_, T>, sigma: f64) -> Array3<T> {
    let taps = gaussian_taps(sigma);
    let radius = (taps.len() / 2) as isize;
    let (c, h, w) = image.dim();
    let mut rows = Array3::<f64>::zeros((c, h, w));
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                rows[(ch, y, x)] = taps
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        t * image[(ch, y, reflect_index(x as isize + i as isize - radius, w))]
                            .as_f64()
                    })
                    .sum();
            }
        }
    }
    Array3::from_shape_fn((c, h, w), |(ch, y, x)| {
        T::lit(
            taps.iter()
                .enumerate()
                .map(|(i, t)| t * rows[(ch, reflect_index(y as isize + i as isize - radius, h), x)])
                .sum(),
        )
    })
}

pub fn white_noise<T: Real>(image: ArrayView3<'_, T>, sigma: f64, seed: u64) -> Array3<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let mut out = image.to_owned();
    for v in out.iter_mut() {
        *v = T::lit((v.as_f64() + normal.sample(&mut rng)).clamp(0.0, 1.0));
    }
    out
}

pub fn jpeg_like_block_avg<T: Real>(image: ArrayView3<'_, T>, level: f64) -> Array3<T> {
    let alpha = 1.0 - (-level).exp();
    let (c, h, w) = image.dim();
    let mut out = image.to_owned();
    for ch in 0..c {
        for by in (0..h).step_by(BLOCK) {
            for bx in (0..w).step_by(BLOCK) {
                let (ye, xe) = ((by + BLOCK).min(h), (bx + BLOCK).min(w));
                let mut sum = 0.0;
                for y in by..ye {
                    for x in bx..xe {
                        sum += image[(ch, y, x)].as_f64();
                    }
                }
                let mean = sum / ((ye - by) * (xe - bx)) as f64;
                for y in by..ye {
                    for x in bx..xe {
                        let v = image[(ch, y, x)].as_f64();
                        out[(ch, y, x)] = T::lit((1.0 - alpha) * v + alpha * mean);
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured() -> Array3<f64> {
        Array3::from_shape_fn((3, 32, 40), |(c, y, x)| {
            0.5 + 0.4 * ((x * 3 + y * 5 + c) as f64 * 0.9).sin()
        })
    }

    #[test]
    fn kind_names() {
        for k in DegradationKind::ALL {
            assert_eq!(k.name().parse::<DegradationKind>().unwrap(), k);
        }
        assert!(matches!(
            "sharpen".parse::<DegradationKind>(),
            Err(Error::UnknownKind(_))
        ));
    }

    #[test]
    fn tiny_blur_is_identity() {
        let img = textured();
        let out = degrade(img.view(), DegradationKind::GaussianBlur, 1e-3, 0).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn blur_preserves_constants() {
        let img = Array3::from_elem((3, 20, 20), 0.3);
        let out = gaussian_blur(img.view(), 2.5);
        assert!(out.iter().all(|v: &f64| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn noise_is_seeded() {
        let img = textured();
        let a = white_noise(img.view(), 0.05, 9);
        assert_eq!(a, white_noise(img.view(), 0.05, 9));
        assert_ne!(a, white_noise(img.view(), 0.05, 10));
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn block_average_limits() {
        let img = textured();
        let strong = jpeg_like_block_avg(img.view(), 50.0);
        // Inside a block every pixel equals the block mean.
        let mean: f64 = (0..8)
            .flat_map(|y| (0..8).map(move |x| (y, x)))
            .map(|(y, x)| img[(0, y, x)])
            .sum::<f64>()
            / 64.0;
        assert!((strong[(0, 3, 5)] - mean).abs() < 1e-12);
        assert!(degrade(img.view(), DegradationKind::JpegLikeBlockAvg, 0.0, 0).is_err());
    }
}
