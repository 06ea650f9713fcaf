//! Feature backbones: a pretrained network loaded from an ONNX file, or a
//! seeded random-projection network used as a test fixture.
//!
//! Both expose the same five-stage feature pyramid. A handle carries the
//! input normalization it was built with, and that normalization is folded
//! into [`BackboneHandle::id`] so features produced under different
//! preprocessing never end up compared against each other.

mod manifest;
#[cfg(feature = "onnx")]
mod onnx;
mod synthetic;

use std::fmt;

use ndarray::{Array3, ArrayView3, Zip};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use manifest::BackboneManifest;
#[cfg(feature = "onnx")]
pub use onnx::{load_backbone, load_backbone_with_manifest};
pub use synthetic::{synthetic_backbone, SyntheticNet};

/// Number of pyramid stages every backbone must expose.
pub const STAGE_COUNT: usize = 5;

/// Smallest accepted input side, so the stride-32 stage is at least 2x2.
pub const MIN_INPUT_SIDE: usize = 64;

/// Per-channel input normalization applied before inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub channel_means: [f64; 3],
    pub channel_stds: [f64; 3],
    pub value_range: [f64; 2],
}

impl PreprocessSpec {
    pub fn new(
        channel_means: [f64; 3],
        channel_stds: [f64; 3],
        value_range: [f64; 2],
    ) -> Result<Self> {
        let spec = Self {
            channel_means,
            channel_stds,
            value_range,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// ImageNet statistics on `[0, 1]` inputs, the usual convention for
    /// torchvision-exported classifiers.
    pub fn imagenet() -> Self {
        Self {
            channel_means: [0.485, 0.456, 0.406],
            channel_stds: [0.229, 0.224, 0.225],
            value_range: [0.0, 1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .channel_stds
            .iter()
            .any(|s| !(*s > 0.0) || !s.is_finite())
        {
            return Err(Error::InvalidManifest(
                "channel_stds must be positive".into(),
            ));
        }
        if self.channel_means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidManifest(
                "channel_means must be finite".into(),
            ));
        }
        let [lo, hi] = self.value_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidManifest(
                "value_range must satisfy lo < hi".into(),
            ));
        }
        Ok(())
    }

    fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("preprocess spec serializes")
    }
}

/// Ordered per-stage activations, stage `i` shaped `(C_i, H_i, W_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePyramid<T> {
    pub stages: Vec<Array3<T>>,
}

impl<T: Real> FeaturePyramid<T> {
    pub fn new(stages: Vec<Array3<T>>) -> Result<Self> {
        if stages.len() != STAGE_COUNT {
            return Err(Error::StageCount {
                expected: STAGE_COUNT,
                got: stages.len(),
            });
        }
        Ok(Self { stages })
    }

    pub fn channels(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.dim().0).collect()
    }

    pub fn spatial_dims(&self) -> Vec<(usize, usize)> {
        self.stages.iter().map(|s| (s.dim().1, s.dim().2)).collect()
    }
}

pub(crate) enum Engine {
    Synthetic(SyntheticNet),
    #[cfg(feature = "onnx")]
    Onnx(onnx::OnnxEngine),
}

/// A loaded backbone plus the metadata needed to interpret its output.
pub struct BackboneHandle {
    /// Content hash identifying weights and preprocessing together.
    pub id: String,
    /// SHA-256 of the weight file alone (or of the synthetic recipe).
    pub model_sha256: String,
    pub stage_channels: [usize; STAGE_COUNT],
    pub stage_strides: [usize; STAGE_COUNT],
    pub preprocess: PreprocessSpec,
    pub(crate) engine: Engine,
}

impl fmt::Debug for BackboneHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.engine {
            Engine::Synthetic(_) => "synthetic",
            #[cfg(feature = "onnx")]
            Engine::Onnx(_) => "onnx",
        };
        f.debug_struct("BackboneHandle")
            .field("id", &self.id)
            .field("kind", &kind)
            .field("stage_channels", &self.stage_channels)
            .field("stage_strides", &self.stage_strides)
            .finish()
    }
}

impl BackboneHandle {
    pub(crate) fn build(
        model_sha256: String,
        stage_channels: [usize; STAGE_COUNT],
        stage_strides: [usize; STAGE_COUNT],
        preprocess: PreprocessSpec,
        engine: Engine,
    ) -> Result<Self> {
        preprocess.validate()?;
        if stage_channels.contains(&0) {
            return Err(Error::InvalidModel(
                "every stage needs at least one channel".into(),
            ));
        }
        validate_strides(&stage_strides)?;
        let mut hasher = Sha256::new();
        hasher.update(model_sha256.as_bytes());
        hasher.update(preprocess.canonical_bytes());
        let id = hex::encode(hasher.finalize());
        Ok(Self {
            id,
            model_sha256,
            stage_channels,
            stage_strides,
            preprocess,
            engine,
        })
    }

    /// Total channel count `l` of the fused map.
    pub fn fused_dim(&self) -> usize {
        self.stage_channels.iter().sum()
    }

    /// Expected `(H_i, W_i)` of every stage for an input of `height x width`.
    pub fn expected_dims(&self, height: usize, width: usize) -> [(usize, usize); STAGE_COUNT] {
        self.stage_strides
            .map(|s| (height.div_ceil(s), width.div_ceil(s)))
    }

    /// Run the backbone on a `3 x H x W` image whose values lie in
    /// `preprocess.value_range`.
    pub fn extract_pyramid<T: Real>(&self, image: ArrayView3<'_, T>) -> Result<FeaturePyramid<T>> {
        let (c, h, w) = image.dim();
        if c != 3 {
            return Err(Error::DimMismatch {
                expected: 3,
                got: c,
            });
        }
        if h.min(w) < MIN_INPUT_SIDE {
            return Err(Error::ImageTooSmall {
                height: h,
                width: w,
                min: MIN_INPUT_SIDE,
            });
        }
        let input = self.normalize(image)?;
        let stages = match &self.engine {
            Engine::Synthetic(net) => net.forward(input.view()),
            #[cfg(feature = "onnx")]
            Engine::Onnx(engine) => engine.forward(input.view())?,
        };
        let pyramid = FeaturePyramid::new(stages)?;
        self.check_pyramid(&pyramid, h, w)?;
        Ok(pyramid)
    }

    fn normalize<T: Real>(&self, image: ArrayView3<'_, T>) -> Result<Array3<T>> {
        let [lo, hi] = self.preprocess.value_range;
        if let Some(bad) = image.iter().find(|v| {
            let v = v.as_f64();
            !(v >= lo && v <= hi)
        }) {
            return Err(Error::ImageOutOfRange {
                value: bad.as_f64(),
                lo,
                hi,
            });
        }
        let mut out = image.to_owned();
        for (ch, mut plane) in out.outer_iter_mut().enumerate() {
            let mean = T::lit(self.preprocess.channel_means[ch]);
            let std = T::lit(self.preprocess.channel_stds[ch]);
            plane.mapv_inplace(|v| (v - mean) / std);
        }
        Ok(out)
    }

    fn check_pyramid<T: Real>(
        &self,
        pyramid: &FeaturePyramid<T>,
        h: usize,
        w: usize,
    ) -> Result<()> {
        let expected = self.expected_dims(h, w);
        for (i, (stage, &(eh, ew))) in pyramid.stages.iter().zip(expected.iter()).enumerate() {
            let (c, sh, sw) = stage.dim();
            if c != self.stage_channels[i] {
                return Err(Error::InvalidModel(format!(
                    "stage {} produced {c} channels, expected {}",
                    i + 1,
                    self.stage_channels[i]
                )));
            }
            if sh.abs_diff(eh) > 1 || sw.abs_diff(ew) > 1 {
                return Err(Error::IncompatibleShapes(format!(
                    "stage {} is {sh}x{sw}, expected about {eh}x{ew} for a {h}x{w} input",
                    i + 1
                )));
            }
            let finite = Zip::from(stage).all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFiniteActivation { stage: i + 1 });
            }
        }
        Ok(())
    }
}

fn validate_strides(strides: &[usize; STAGE_COUNT]) -> Result<()> {
    if strides[0] == 0 {
        return Err(Error::InvalidModel("stage strides must be positive".into()));
    }
    for pair in strides.windows(2) {
        if pair[1] <= pair[0] || pair[1] % pair[0] != 0 {
            return Err(Error::InvalidModel(format!(
                "stage strides {strides:?} must strictly increase and divide each other"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_rules() {
        assert!(validate_strides(&[2, 4, 8, 16, 32]).is_ok());
        assert!(validate_strides(&[2, 4, 4, 16, 32]).is_err());
        assert!(validate_strides(&[2, 4, 6, 12, 24]).is_err());
    }

    #[test]
    fn preprocess_rejects_bad_values() {
        assert!(PreprocessSpec::new([0.0; 3], [1.0, 0.0, 1.0], [0.0, 1.0]).is_err());
        assert!(PreprocessSpec::new([0.0; 3], [1.0; 3], [1.0, 1.0]).is_err());
        assert!(PreprocessSpec::new([0.0; 3], [1.0; 3], [0.0, 255.0]).is_ok());
    }

    #[test]
    fn expected_dims_follow_ceil_law() {
        let handle = synthetic_backbone(1, [2; 5]);
        assert_eq!(
            handle.expected_dims(256, 256).map(|d| d.0),
            [128, 64, 32, 16, 8]
        );
        assert_eq!(handle.expected_dims(100, 70)[4], (4, 3));
    }

    #[test]
    fn small_images_are_rejected() {
        let handle = synthetic_backbone(1, [2; 5]);
        let img = Array3::<f64>::from_elem((3, 32, 32), 0.5);
        assert!(matches!(
            handle.extract_pyramid(img.view()),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn out_of_range_pixels_are_rejected() {
        let handle = synthetic_backbone(1, [2; 5]);
        let mut img = Array3::<f64>::from_elem((3, 64, 64), 0.5);
        img[(1, 3, 3)] = 1.5;
        assert!(matches!(
            handle.extract_pyramid(img.view()),
            Err(Error::ImageOutOfRange { .. })
        ));
    }
}
