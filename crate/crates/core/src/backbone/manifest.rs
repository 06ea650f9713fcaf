use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PreprocessSpec, STAGE_COUNT};
use crate::error::{Error, Result};

/// Sidecar JSON describing how to drive an ONNX backbone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneManifest {
    /// Graph value names of the five pyramid stages, shallowest first.
    pub stage_outputs: Vec<String>,
    pub channel_means: [f64; 3],
    pub channel_stds: [f64; 3],
    pub value_range: [f64; 2],
}

impl BackboneManifest {
    pub fn new(stage_outputs: Vec<String>, preprocess: &PreprocessSpec) -> Self {
        Self {
            stage_outputs,
            channel_means: preprocess.channel_means,
            channel_stds: preprocess.channel_stds,
            value_range: preprocess.value_range,
        }
    }

    /// `model.onnx` -> `model.manifest.json`
    pub fn sidecar_path(model_path: &Path) -> PathBuf {
        model_path.with_extension("manifest.json")
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        let manifest: Self =
            serde_json::from_str(&text).map_err(|e| Error::InvalidManifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_outputs.len() != STAGE_COUNT {
            return Err(Error::StageCount {
                expected: STAGE_COUNT,
                got: self.stage_outputs.len(),
            });
        }
        self.preprocess().validate()
    }

    pub fn preprocess(&self) -> PreprocessSpec {
        PreprocessSpec {
            channel_means: self.channel_means,
            channel_stds: self.channel_stds,
            value_range: self.value_range,
        }
    }
}
