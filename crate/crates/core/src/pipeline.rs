//! Training and testing phases: fit a benchmark Gaussian over a pristine
//! corpus, then score images by their distance to it.

use std::time::Instant;

use ndarray::{Array2, ArrayView3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backbone::BackboneHandle;
use crate::error::{Error, Result};
use crate::mvg::{
    fit_mvg, mvg_distance, relative_ridge, ModelSource, MomentAccumulator, MvgModel, SampleMatrix,
};
use crate::pyramid::{fuse_pyramid, DOWNSAMPLE_KERNEL_ID};
use crate::scalar::Real;
use crate::stats::{
    compute_stats_with, ContrastMode, StatBundle, StatsConfig, WeightFeature, DEFAULT_DELTA,
    DEFAULT_K,
};

/// Gaussian sigma rule for the local-statistics window.
pub const SIGMA_RULE: &str = "window/6";

/// Which phases weight their sample moments by the contrast weighting map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    /// Benchmark unweighted, test image weighted.
    #[default]
    TestWeighted,
    Unweighted,
    BothWeighted,
}

impl WeightingMode {
    pub fn weights(self, phase: Phase) -> bool {
        match (self, phase) {
            (WeightingMode::Unweighted, _) => false,
            (WeightingMode::BothWeighted, _) => true,
            (WeightingMode::TestWeighted, Phase::Benchmark) => false,
            (WeightingMode::TestWeighted, Phase::Test) => true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Benchmark,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig<T> {
    /// Window exponent of the dynamic Gaussian window.
    pub k: u32,
    /// Stabilizer of the weighting-map denominator.
    pub delta: T,
    /// Ridge added to the pooled covariance, relative to its mean eigenvalue.
    pub ridge_rel: T,
    pub weighting_mode: WeightingMode,
    pub contrast: ContrastMode,
    pub weight_feature: WeightFeature,
    pub downsample_kernel_id: String,
    pub sigma_rule: String,
}

impl<T: Real> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            delta: T::lit(DEFAULT_DELTA),
            ridge_rel: T::lit(1e-6),
            weighting_mode: WeightingMode::default(),
            contrast: ContrastMode::default(),
            weight_feature: WeightFeature::default(),
            downsample_kernel_id: DOWNSAMPLE_KERNEL_ID.to_string(),
            sigma_rule: SIGMA_RULE.to_string(),
        }
    }
}

#[derive(Serialize)]
struct HashedConfig<'a> {
    backbone_id: &'a str,
    scalar: &'static str,
    k: u32,
    delta: f64,
    contrast: ContrastMode,
    weight_feature: WeightFeature,
    benchmark_weighted: bool,
    downsample_kernel_id: &'a str,
    sigma_rule: &'a str,
}

impl<T: Real> PipelineConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if !(self.delta > T::zero()) {
            return Err(Error::InvalidArgument("delta must be positive".into()));
        }
        if !(self.ridge_rel >= T::zero()) {
            return Err(Error::InvalidArgument(
                "ridge_rel must be nonnegative".into(),
            ));
        }
        if self.downsample_kernel_id != DOWNSAMPLE_KERNEL_ID {
            return Err(Error::InvalidArgument(format!(
                "unsupported downsample kernel `{}`",
                self.downsample_kernel_id
            )));
        }
        if self.sigma_rule != SIGMA_RULE {
            return Err(Error::InvalidArgument(format!(
                "unsupported sigma rule `{}`",
                self.sigma_rule
            )));
        }
        Ok(())
    }

    pub fn stats_config(&self) -> StatsConfig<T> {
        StatsConfig {
            k: self.k,
            delta: self.delta,
            contrast: self.contrast,
            weight_feature: self.weight_feature,
        }
    }

    /// Hash of everything that shapes benchmark features: backbone identity,
    /// scalar type and the feature-statistics settings. Score-time settings
    /// (ridge, test-side weighting) are left out.
    pub fn config_hash(&self, backbone: &BackboneHandle) -> String {
        let hashed = HashedConfig {
            backbone_id: &backbone.id,
            scalar: T::NAME,
            k: self.k,
            delta: self.delta.as_f64(),
            contrast: self.contrast,
            weight_feature: self.weight_feature,
            benchmark_weighted: self.weighting_mode.weights(Phase::Benchmark),
            downsample_kernel_id: &self.downsample_kernel_id,
            sigma_rule: &self.sigma_rule,
        };
        hex::encode(Sha256::digest(
            serde_json::to_vec(&hashed).expect("config serializes"),
        ))
    }
}

/// Backbone -> fusion -> local statistics for one image.
pub fn image_stats<T: Real>(
    image: ArrayView3<'_, T>,
    backbone: &BackboneHandle,
    config: &PipelineConfig<T>,
) -> Result<StatBundle<T>> {
    let pyramid = backbone.extract_pyramid(image)?;
    let fused = fuse_pyramid(&pyramid)?;
    compute_stats_with(&fused, &config.stats_config())
}

/// One row per spatial position of the normalized local-mean features,
/// row-major over `(y, x)`, weighted by the contrast map when `phase` asks.
pub fn collect_samples<T: Real>(
    image: ArrayView3<'_, T>,
    backbone: &BackboneHandle,
    config: &PipelineConfig<T>,
    phase: Phase,
) -> Result<SampleMatrix<T>> {
    let stats = image_stats(image, backbone, config)?;
    let (c, h, w) = stats.f_mu_norm.dim();
    let rows: Array2<T> = stats
        .f_mu_norm
        .permuted_axes([1, 2, 0])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((h * w, c))
        .expect("contiguous reshape");
    let weights = config.weighting_mode.weights(phase).then(|| {
        stats
            .weight_map
            .as_standard_layout()
            .iter()
            .copied()
            .collect()
    });
    SampleMatrix::new(rows, weights)
}

#[derive(Clone, Debug, PartialEq)]
pub enum FitWarning {
    /// Fewer than `10 * dim` samples; the covariance estimate is unstable.
    FewSamples { samples: usize, dim: usize },
}

#[derive(Clone, Debug)]
pub struct BenchmarkFit<T> {
    pub model: MvgModel<T>,
    pub warnings: Vec<FitWarning>,
}

/// Fit the benchmark from in-memory images, processed one at a time.
pub fn fit_benchmark<T: Real>(
    corpus: &[ndarray::Array3<T>],
    backbone: &BackboneHandle,
    config: &PipelineConfig<T>,
) -> Result<BenchmarkFit<T>> {
    fit_benchmark_with(corpus.len(), |i| Ok(corpus[i].clone()), backbone, config, 1)
}

/// Fit the benchmark from `count` images produced by `load(i)`.
///
/// Up to `jobs` images are processed concurrently. Per-image moments are
/// always merged in index order, so the model bits do not depend on `jobs`.
pub fn fit_benchmark_with<T, F>(
    count: usize,
    load: F,
    backbone: &BackboneHandle,
    config: &PipelineConfig<T>,
    jobs: usize,
) -> Result<BenchmarkFit<T>>
where
    T: Real,
    F: Fn(usize) -> Result<ndarray::Array3<T>> + Sync,
{
    config.validate()?;
    if count == 0 {
        return Err(Error::EmptyCorpus);
    }
    let jobs = jobs.max(1);
    let dim = backbone.fused_dim();
    let per_image = |i: usize| -> Result<MomentAccumulator<T>> {
        let image = load(i)?;
        let samples = collect_samples(image.view(), backbone, config, Phase::Benchmark)?;
        Ok(MomentAccumulator::from_samples(&samples))
    };

    let mut total = MomentAccumulator::empty(dim);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    for start in (0..count).step_by(jobs) {
        let end = (start + jobs).min(count);
        let parts: Vec<Result<MomentAccumulator<T>>> = if jobs == 1 {
            vec![per_image(start)]
        } else {
            pool.install(|| (start..end).into_par_iter().map(per_image).collect())
        };
        for part in parts {
            total.merge(&part?)?;
        }
    }

    if total.count < dim {
        return Err(Error::InsufficientSamples {
            samples: total.count,
            dim,
        });
    }
    let mut warnings = Vec::new();
    if total.count < 10 * dim {
        log::warn!(
            "only {} samples for a {dim}-dimensional benchmark",
            total.count
        );
        warnings.push(FitWarning::FewSamples {
            samples: total.count,
            dim,
        });
    }
    let model = total.finish(config.config_hash(backbone), ModelSource::Benchmark)?;
    Ok(BenchmarkFit { model, warnings })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityScore<T> {
    /// Distance to the benchmark; larger means worse quality.
    pub value: T,
    pub image_id: String,
    /// Wall-clock time spent scoring, excluding model and image loading.
    pub elapsed_ms: f64,
}

/// Test-phase Gaussian for one image, tagged with the benchmark's hash.
pub fn fit_test_model<T: Real>(
    image: ArrayView3<'_, T>,
    backbone: &BackboneHandle,
    config: &PipelineConfig<T>,
) -> Result<MvgModel<T>> {
    let samples = collect_samples(image, backbone, config, Phase::Test)?;
    Ok(fit_mvg(&samples)?.with_provenance(config.config_hash(backbone), ModelSource::Test))
}

/// Score one image against a benchmark model.
pub fn score_image<T: Real>(
    image: ArrayView3<'_, T>,
    image_id: &str,
    benchmark: &MvgModel<T>,
    backbone: &BackboneHandle,
    config: &PipelineConfig<T>,
) -> Result<QualityScore<T>> {
    config.validate()?;
    let hash = config.config_hash(backbone);
    if hash != benchmark.config_hash {
        return Err(Error::ConfigMismatch {
            expected: benchmark.config_hash.clone(),
            got: hash,
        });
    }
    let started = Instant::now();
    let test = fit_test_model(image, backbone, config)?;
    let ridge = relative_ridge(&test, benchmark, config.ridge_rel);
    let value = mvg_distance(&test, benchmark, ridge)?;
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(QualityScore {
        value,
        image_id: image_id.to_string(),
        elapsed_ms,
    })
}

/// Per-position feature rows of a stat bundle, exposed for diagnostics.
pub fn feature_rows<T: Real>(stats: &StatBundle<T>) -> Array2<T> {
    let (c, h, w) = stats.f_mu_norm.dim();
    let mut rows = Array2::<T>::zeros((h * w, c));
    for (ch, plane) in stats.f_mu_norm.axis_iter(Axis(0)).enumerate() {
        for (i, v) in plane.iter().enumerate() {
            rows[(i, ch)] = *v;
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::synthetic_backbone;
    use ndarray::Array3;

    fn image(seed: usize, side: usize) -> Array3<f64> {
        Array3::from_shape_fn((3, side, side), |(c, y, x)| {
            let t = (seed as f64 + 1.0) * 0.37;
            0.5 + 0.45 * ((x as f64 * 0.21 * t + c as f64).sin() * (y as f64 * 0.13 + t).cos())
        })
    }

    #[test]
    fn samples_have_one_row_per_position() {
        let bb = synthetic_backbone(7, [4; 5]);
        let s = collect_samples(
            image(0, 128).view(),
            &bb,
            &PipelineConfig::default(),
            Phase::Test,
        )
        .unwrap();
        assert_eq!(s.dim(), 20);
        assert_eq!(s.len(), 16);
        assert_eq!(s.weights.as_ref().map(|w| w.len()), Some(16));
        let s = collect_samples(
            image(0, 128).view(),
            &bb,
            &PipelineConfig::default(),
            Phase::Benchmark,
        )
        .unwrap();
        assert!(s.weights.is_none());
    }

    #[test]
    fn rows_match_feature_layout() {
        let bb = synthetic_backbone(3, [2, 3, 2, 3, 2]);
        let cfg = PipelineConfig::default();
        let img = image(4, 96);
        let stats = image_stats(img.view(), &bb, &cfg).unwrap();
        let s = collect_samples(img.view(), &bb, &cfg, Phase::Benchmark).unwrap();
        assert_eq!(s.rows, feature_rows(&stats));
    }

    #[test]
    fn constant_image_gives_identical_rows() {
        let bb = synthetic_backbone(5, [4; 5]);
        let img = Array3::from_elem((3, 128, 96), 0.7);
        let s = collect_samples(img.view(), &bb, &PipelineConfig::default(), Phase::Test).unwrap();
        let first = s.rows.row(0).to_owned();
        for row in s.rows.outer_iter() {
            assert_eq!(row, first);
        }
    }

    #[test]
    fn weighting_modes() {
        assert!(!WeightingMode::TestWeighted.weights(Phase::Benchmark));
        assert!(WeightingMode::TestWeighted.weights(Phase::Test));
        assert!(!WeightingMode::Unweighted.weights(Phase::Test));
        assert!(WeightingMode::BothWeighted.weights(Phase::Benchmark));
    }

    #[test]
    fn config_hash_tracks_feature_settings_only() {
        let bb = synthetic_backbone(1, [2; 5]);
        let base = PipelineConfig::<f64>::default();
        let ridge = PipelineConfig {
            ridge_rel: 1e-3,
            ..base.clone()
        };
        let unweighted = PipelineConfig {
            weighting_mode: WeightingMode::Unweighted,
            ..base.clone()
        };
        let k4 = PipelineConfig {
            k: 4,
            ..base.clone()
        };
        let both = PipelineConfig {
            weighting_mode: WeightingMode::BothWeighted,
            ..base.clone()
        };
        assert_eq!(base.config_hash(&bb), ridge.config_hash(&bb));
        assert_eq!(base.config_hash(&bb), unweighted.config_hash(&bb));
        assert_ne!(base.config_hash(&bb), k4.config_hash(&bb));
        assert_ne!(base.config_hash(&bb), both.config_hash(&bb));
        assert_ne!(
            base.config_hash(&bb),
            base.config_hash(&synthetic_backbone(2, [2; 5]))
        );
        assert_ne!(
            base.config_hash(&bb),
            PipelineConfig::<f32>::default().config_hash(&bb)
        );
    }

    #[test]
    fn config_validation() {
        let bad = PipelineConfig::<f64> {
            delta: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig::<f64> {
            downsample_kernel_id: "box2".into(),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let parsed: PipelineConfig<f64> =
            serde_json::from_str(r#"{"k": 4, "weighting_mode": "both_weighted"}"#).unwrap();
        assert_eq!(parsed.k, 4);
        assert_eq!(parsed.weighting_mode, WeightingMode::BothWeighted);
        assert_eq!(parsed.ridge_rel, 1e-6);
    }

    #[test]
    fn empty_corpus() {
        let bb = synthetic_backbone(1, [2; 5]);
        assert!(matches!(
            fit_benchmark::<f64>(&[], &bb, &PipelineConfig::default()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn too_few_samples_is_an_error() {
        // 64x64 input -> 2x2 positions, far below l = 20.
        let bb = synthetic_backbone(1, [4; 5]);
        let err = fit_benchmark(&[image(1, 64)], &bb, &PipelineConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientSamples {
                samples: 4,
                dim: 20
            }
        ));
    }
}
