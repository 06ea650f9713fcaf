//! Versioned JSON model files.
//!
//! ```json
//! {"format_version":1,"magic":"MDFS","config_hash":"…","dim":l,"sample_count":n,
//!  "source":"benchmark","mean":[…],"cov":[… row-major …],
//!  "created_utc":null,"sha256_of_payload":"…"}
//! ```
//!
//! The checksum covers every field except `format_version`, `magic`,
//! `created_utc` and the checksum itself. Floats are written as shortest
//! round-trip decimal, so `f64` values survive a save/load cycle bit-exactly.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelSource, MvgModel};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &str = "MDFS";
pub const FORMAT_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u64,
    pub magic: String,
    pub config_hash: String,
    pub dim: usize,
    pub sample_count: usize,
    pub source: ModelSource,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
    pub created_utc: Option<String>,
    pub sha256_of_payload: String,
}

#[derive(Serialize)]
struct Payload<'a> {
    config_hash: &'a str,
    dim: usize,
    sample_count: usize,
    source: ModelSource,
    mean: &'a [f64],
    cov: &'a [f64],
}

impl ModelFile {
    pub fn from_model<T: Real>(model: &MvgModel<T>, created_utc: Option<String>) -> Self {
        let mut file = Self {
            format_version: FORMAT_VERSION,
            magic: MAGIC.to_string(),
            config_hash: model.config_hash.clone(),
            dim: model.dim,
            sample_count: model.sample_count,
            source: model.source,
            mean: model.mean.iter().map(|v| v.as_f64()).collect(),
            cov: model.cov.iter().map(|v| v.as_f64()).collect(),
            created_utc,
            sha256_of_payload: String::new(),
        };
        file.sha256_of_payload = file.payload_hash();
        file
    }

    fn payload_hash(&self) -> String {
        let payload = Payload {
            config_hash: &self.config_hash,
            dim: self.dim,
            sample_count: self.sample_count,
            source: self.source,
            mean: &self.mean,
            cov: &self.cov,
        };
        let bytes = serde_json::to_vec(&payload).expect("payload serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_model<T: Real>(&self) -> Result<MvgModel<T>> {
        let l = self.dim;
        if self.mean.len() != l || self.cov.len() != l * l {
            return Err(Error::InvalidFormat(format!(
                "dim {l} does not match {} mean and {} covariance entries",
                self.mean.len(),
                self.cov.len()
            )));
        }
        let convert = |v: &f64| {
            T::from_f64(*v)
                .ok_or_else(|| Error::InvalidFormat(format!("value {v} not representable")))
        };
        let mean = self.mean.iter().map(convert).collect::<Result<Vec<T>>>()?;
        let cov = self.cov.iter().map(convert).collect::<Result<Vec<T>>>()?;
        let cov = Array2::from_shape_vec((l, l), cov).expect("length checked");
        MvgModel::new(
            Array1::from(mean),
            cov,
            self.sample_count,
            self.config_hash.clone(),
            self.source,
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec(self).expect("model file serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| {
            if e.is_eof() {
                Error::ChecksumMismatch(format!("file is truncated ({e})"))
            } else {
                Error::InvalidFormat(e.to_string())
            }
        })?;
        if value.get("magic").and_then(|m| m.as_str()) != Some(MAGIC) {
            return Err(Error::InvalidFormat("missing MDFS magic".into()));
        }
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::InvalidFormat("missing format_version".into()))?;
        if version > FORMAT_VERSION {
            return Err(Error::FormatVersionUnsupported {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        if version == 0 {
            return Err(Error::InvalidFormat("format_version 0 is not valid".into()));
        }
        let file: Self =
            serde_json::from_value(value).map_err(|e| Error::InvalidFormat(e.to_string()))?;
        let actual = file.payload_hash();
        if actual != file.sha256_of_payload {
            return Err(Error::ChecksumMismatch(format!(
                "payload hashes to {actual}, file records {}",
                file.sha256_of_payload
            )));
        }
        Ok(file)
    }
}

/// Write `model` to `path` with no creation timestamp.
pub fn save_model<T: Real>(model: &MvgModel<T>, path: &Path) -> Result<()> {
    save_model_stamped(model, path, None)
}

pub fn save_model_stamped<T: Real>(
    model: &MvgModel<T>,
    path: &Path,
    created_utc: Option<String>,
) -> Result<()> {
    std::fs::write(path, ModelFile::from_model(model, created_utc).to_bytes())?;
    Ok(())
}

pub fn load_model<T: Real>(path: &Path) -> Result<MvgModel<T>> {
    let bytes = std::fs::read(path)?;
    ModelFile::from_bytes(&bytes)?.to_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample_model() -> MvgModel<f64> {
        MvgModel::new(
            array![0.1, -1.0 / 3.0, 1e-300],
            array![
                [2.0, 0.1 + 0.2, 0.0],
                [0.1 + 0.2, 1.0 / 7.0, 5e-17],
                [0.0, 5e-17, std::f64::consts::PI]
            ],
            1234,
            "abc123",
            ModelSource::Benchmark,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = sample_model();
        save_model(&m, &path).unwrap();
        let back: MvgModel<f64> = load_model(&path).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.cov.iter().zip(m.cov.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn f32_models_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = MvgModel::<f32>::new(
            array![0.1f32, 0.7],
            array![[1.5f32, 0.25], [0.25, 1.0 / 3.0]],
            3,
            "h",
            ModelSource::Test,
        )
        .unwrap();
        save_model(&m, &path).unwrap();
        assert_eq!(load_model::<f32>(&path).unwrap(), m);
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = ModelFile::from_model(&sample_model(), None).to_bytes();
        for cut in [10, bytes.len() / 2, bytes.len() - 3] {
            assert!(matches!(
                ModelFile::from_bytes(&bytes[..cut]),
                Err(Error::ChecksumMismatch(_))
            ));
        }
    }

    #[test]
    fn tampering_is_detected() {
        let mut file = ModelFile::from_model(&sample_model(), None);
        file.mean[0] = 0.2;
        assert!(matches!(
            ModelFile::from_bytes(&file.to_bytes()),
            Err(Error::ChecksumMismatch(_))
        ));
    }

    #[test]
    fn timestamp_is_outside_the_checksum() {
        let a = ModelFile::from_model(&sample_model(), None);
        let b = ModelFile::from_model(&sample_model(), Some("2026-01-01T00:00:00Z".into()));
        assert_eq!(a.sha256_of_payload, b.sha256_of_payload);
        assert!(ModelFile::from_bytes(&b.to_bytes()).is_ok());
    }

    #[test]
    fn future_versions_are_refused() {
        let mut file = ModelFile::from_model(&sample_model(), None);
        file.format_version = FORMAT_VERSION + 1;
        assert!(matches!(
            ModelFile::from_bytes(&file.to_bytes()),
            Err(Error::FormatVersionUnsupported {
                found: 2,
                supported: 1
            })
        ));
    }

    #[test]
    fn wrong_magic_is_refused() {
        let mut file = ModelFile::from_model(&sample_model(), None);
        file.magic = "NIQE".into();
        assert!(matches!(
            ModelFile::from_bytes(&file.to_bytes()),
            Err(Error::InvalidFormat(_))
        ));
    }
}
