use std::f64::consts::TAU;
use std::path::Path;

use image::{ImageBuffer, Rgb};
use ndarray::{Array3, ArrayView3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

const GRATINGS: usize = 32;
const BLOBS: usize = 6;
const OCTAVES: f64 = 6.5;

/// A seeded RGB test scene in `[0, 1]`: oriented gratings with a `1/f`
/// amplitude falloff plus a few soft-edged discs.
pub fn synthetic_scene(seed: u64, height: usize, width: usize) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Array3::<f64>::zeros((3, height, width));
    let side = height.min(width) as f64;
    for _ in 0..GRATINGS {
        let cycles: f64 = 2.0f64.powf(rng.random_range(0.0..OCTAVES));
        let freq = cycles / side;
        let theta = rng.random_range(0.0..TAU);
        let phase = rng.random_range(0.0..TAU);
        let amp = 0.6 / cycles.sqrt();
        let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.6..1.0));
        let (fx, fy) = (freq * theta.cos(), freq * theta.sin());
        for y in 0..height {
            for x in 0..width {
                let v = amp * (TAU * (fx * x as f64 + fy * y as f64) + phase).sin();
                for c in 0..3 {
                    img[(c, y, x)] += tint[c] * v;
                }
            }
        }
    }
    for _ in 0..BLOBS {
        let (cy, cx) = (
            rng.random_range(0.0..height as f64),
            rng.random_range(0.0..width as f64),
        );
        let r = rng.random_range(0.05..0.25) * side;
        let color: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.8..0.8));
        for y in 0..height {
            for x in 0..width {
                let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
                let edge = 1.0 / (1.0 + ((d - r) / 1.5).exp());
                for c in 0..3 {
                    img[(c, y, x)] += color[c] * edge;
                }
            }
        }
    }
    let (lo, hi) = img
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let scale = if hi > lo { 0.9 / (hi - lo) } else { 0.0 };
    img.mapv_inplace(|v| 0.05 + (v - lo) * scale);
    img
}

/// Write a `3 x H x W` image in `[0, 1]` as 8-bit RGB PNG.
pub fn save_png<T: Real>(image: ArrayView3<'_, T>, path: &Path) -> Result<()> {
    let (c, h, w) = image.dim();
    if c != 3 {
        return Err(Error::InvalidArgument(format!(
            "expected 3 channels, got {c}"
        )));
    }
    let buf = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Rgb(std::array::from_fn(|ch| {
            (image[(ch, y as usize, x as usize)].as_f64().clamp(0.0, 1.0) * 255.0).round() as u8
        }))
    });
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", path.display())))
}
