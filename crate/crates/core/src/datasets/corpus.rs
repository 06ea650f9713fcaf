use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use image::DynamicImage;
use ndarray::Array3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub image_id: String,
    /// Path relative to the corpus root, `/`-separated.
    pub relative_path: String,
    pub sha256: String,
}

/// Ordered list of corpus images. The order is the accumulation order used
/// when fitting a benchmark.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub root: PathBuf,
    pub entries: Vec<CorpusEntry>,
}

impl CorpusManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path_of(&self, entry: &CorpusEntry) -> PathBuf {
        self.root.join(&entry.relative_path)
    }

    pub fn load<T: Real>(&self, index: usize) -> Result<Array3<T>> {
        load_image(&self.path_of(&self.entries[index]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut seen = HashSet::new();
        for e in &manifest.entries {
            if !seen.insert(e.image_id.as_str()) {
                return Err(Error::DuplicateId(e.image_id.clone()));
            }
        }
        Ok(manifest)
    }
}

/// Manifest plus the files that were skipped as undecodable.
#[derive(Clone, Debug)]
pub struct CorpusScan {
    pub manifest: CorpusManifest,
    pub skipped: Vec<(PathBuf, String)>,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(&path, out)?;
        } else if is_image(&path) {
            out.push(path);
        }
    }
    Ok(())
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Image id: relative path without its extension.
fn image_id(relative_path: &str) -> String {
    match relative_path.rfind('.') {
        Some(dot) if !relative_path[dot..].contains('/') => relative_path[..dot].to_string(),
        _ => relative_path.to_string(),
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Scan `dir` recursively for PNG/JPEG/BMP files, sorted by relative path.
/// Every file is decoded once to check it; undecodable files are an error
/// unless `skip_undecodable` is set.
pub fn scan_corpus(dir: &Path, skip_undecodable: bool) -> Result<CorpusScan> {
    if !dir.is_dir() {
        return Err(Error::FileNotFound(dir.to_path_buf()));
    }
    let mut paths = Vec::new();
    walk(dir, &mut paths)?;
    let mut files: Vec<(String, PathBuf)> =
        paths.into_iter().map(|p| (relative(dir, &p), p)).collect();
    files.sort();

    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = HashSet::new();
    for (rel, path) in files {
        let bytes = fs::read(&path)?;
        if let Err(e) = image::load_from_memory(&bytes) {
            if skip_undecodable {
                log::warn!("skipping undecodable image {}: {e}", path.display());
                skipped.push((path, e.to_string()));
                continue;
            }
            return Err(Error::UndecodableImage {
                path,
                reason: e.to_string(),
            });
        }
        let id = image_id(&rel);
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        entries.push(CorpusEntry {
            image_id: id,
            relative_path: rel,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    if entries.is_empty() {
        return Err(Error::EmptyDir(dir.to_path_buf()));
    }
    Ok(CorpusScan {
        manifest: CorpusManifest {
            root: dir.to_path_buf(),
            entries,
        },
        skipped,
    })
}

pub fn load_corpus(dir: &Path, skip_undecodable: bool) -> Result<CorpusManifest> {
    Ok(scan_corpus(dir, skip_undecodable)?.manifest)
}

/// `3 x H x W` RGB in `[0, 1]`; alpha is dropped, grayscale is replicated.
pub fn image_from_dynamic<T: Real>(img: &DynamicImage) -> Array3<T> {
    let wide = matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    );
    if wide {
        let rgb = img.to_rgb16();
        let (w, h) = rgb.dimensions();
        let scale = T::lit(65535.0);
        Array3::from_shape_fn((3, h as usize, w as usize), |(c, y, x)| {
            T::lit(rgb.get_pixel(x as u32, y as u32)[c] as f64) / scale
        })
    } else {
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        let scale = T::lit(255.0);
        Array3::from_shape_fn((3, h as usize, w as usize), |(c, y, x)| {
            T::lit(rgb.get_pixel(x as u32, y as u32)[c] as f64) / scale
        })
    }
}

pub fn load_image<T: Real>(path: &Path) -> Result<Array3<T>> {
    if !path.is_file() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    let img = image::load_from_memory(&bytes).map_err(|e| Error::UndecodableImage {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(image_from_dynamic(&img))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_strip_extension() {
        assert_eq!(image_id("a/b.png"), "a/b");
        assert_eq!(image_id("x.y.jpg"), "x.y");
        assert_eq!(image_id("dir.v2/noext"), "dir.v2/noext");
    }

    #[test]
    fn manifest_json_rejects_duplicates() {
        let entry = CorpusEntry {
            image_id: "a".into(),
            relative_path: "a.png".into(),
            sha256: "0".into(),
        };
        let m = CorpusManifest {
            root: "/tmp".into(),
            entries: vec![entry.clone(), entry],
        };
        assert!(matches!(
            CorpusManifest::from_json(&m.to_json()),
            Err(Error::DuplicateId(_))
        ));
    }
}
