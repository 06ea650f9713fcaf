//! Seeded random-projection backbone.
//!
//! Each stage is a reflection-padded 3x3 convolution with stride 2 followed
//! by an absolute value, so the stage strides are `[2, 4, 8, 16, 32]` and a
//! constant image maps to constant feature maps. Weights are drawn from
//! `N(0, 1 / fan_in)` with a ChaCha stream keyed by the seed.

use ndarray::{Array2, Array3, ArrayView3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::{BackboneHandle, Engine, PreprocessSpec, STAGE_COUNT};
use crate::filter::correlate_plane;
use crate::scalar::Real;

pub const SYNTHETIC_STRIDES: [usize; STAGE_COUNT] = [2, 4, 8, 16, 32];

#[derive(Clone, Debug)]
pub(crate) struct ConvLayer {
    pub(crate) in_channels: usize,
    pub(crate) out_channels: usize,
    /// Row-major `(out, in, 3, 3)`.
    pub(crate) weight: Vec<f64>,
}

impl ConvLayer {
    fn kernel<T: Real>(&self, o: usize, i: usize) -> Array2<T> {
        let base = (o * self.in_channels + i) * 9;
        Array2::from_shape_fn((3, 3), |(y, x)| T::lit(self.weight[base + y * 3 + x]))
    }

    fn forward<T: Real>(&self, input: ArrayView3<'_, T>) -> Array3<T> {
        let (_, h, w) = input.dim();
        let mut out = Array3::<T>::zeros((self.out_channels, h.div_ceil(2), w.div_ceil(2)));
        for o in 0..self.out_channels {
            let mut acc = out.index_axis_mut(ndarray::Axis(0), o);
            for (i, plane) in input.outer_iter().enumerate() {
                let k = self.kernel::<T>(o, i);
                acc += &correlate_plane(plane, k.view(), 2);
            }
            acc.mapv_inplace(|v| v.abs());
        }
        out
    }
}

/// The weights of a synthetic backbone.
#[derive(Clone, Debug)]
pub struct SyntheticNet {
    pub seed: u64,
    pub channels: [usize; STAGE_COUNT],
    pub(crate) layers: Vec<ConvLayer>,
}

impl SyntheticNet {
    pub fn new(seed: u64, channels: [usize; STAGE_COUNT]) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_channels = 3;
        let layers = channels
            .iter()
            .map(|&out_channels| {
                let fan_in = (in_channels * 9) as f64;
                let normal = Normal::new(0.0, fan_in.recip().sqrt()).expect("positive std");
                let weight = (0..out_channels * in_channels * 9)
                    .map(|_| normal.sample(&mut rng))
                    .collect();
                let layer = ConvLayer {
                    in_channels,
                    out_channels,
                    weight,
                };
                in_channels = out_channels;
                layer
            })
            .collect();
        Self {
            seed,
            channels,
            layers,
        }
    }

    pub(crate) fn forward<T: Real>(&self, input: ArrayView3<'_, T>) -> Vec<Array3<T>> {
        let mut stages: Vec<Array3<T>> = Vec::with_capacity(STAGE_COUNT);
        for layer in &self.layers {
            let next = match stages.last() {
                Some(prev) => layer.forward(prev.view()),
                None => layer.forward(input),
            };
            stages.push(next);
        }
        stages
    }

    fn recipe_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"synthetic-v1");
        hasher.update(self.seed.to_le_bytes());
        for c in self.channels {
            hasher.update((c as u64).to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    /// Preprocessing used by synthetic handles: `[0, 1]` inputs centered on
    /// 0.5 with a 0.25 spread.
    pub fn default_preprocess() -> PreprocessSpec {
        PreprocessSpec {
            channel_means: [0.5; 3],
            channel_stds: [0.25; 3],
            value_range: [0.0, 1.0],
        }
    }

    /// Serialize the network as an ONNX graph (opset 13) whose five stage
    /// activations are graph outputs named `stage1` .. `stage5`.
    #[cfg(feature = "onnx")]
    pub fn to_onnx_bytes(&self) -> Vec<u8> {
        super::onnx::export_synthetic(self)
    }

    pub fn into_handle(self, preprocess: PreprocessSpec) -> crate::Result<BackboneHandle> {
        let sha = self.recipe_hash();
        let channels = self.channels;
        BackboneHandle::build(
            sha,
            channels,
            SYNTHETIC_STRIDES,
            preprocess,
            Engine::Synthetic(self),
        )
    }
}

/// Deterministic stand-in backbone: a pure function of `(seed, image)`.
///
/// # Panics
/// If any entry of `stage_channels` is zero.
pub fn synthetic_backbone(seed: u64, stage_channels: [usize; STAGE_COUNT]) -> BackboneHandle {
    assert!(
        stage_channels.iter().all(|&c| c >= 1),
        "synthetic stages need at least one channel"
    );
    SyntheticNet::new(seed, stage_channels)
        .into_handle(SyntheticNet::default_preprocess())
        .expect("synthetic handle is always valid")
}
