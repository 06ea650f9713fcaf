use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosRow {
    pub image_id: String,
    pub mos: f64,
}

/// Subjective scores keyed by image id, in file order.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct MosTable {
    pub rows: Vec<MosRow>,
    pub scale_note: String,
}

/// Scores and MOS values paired by id, plus the ids found on one side only.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct JoinedScores {
    pub ids: Vec<String>,
    pub scores: Vec<f64>,
    pub mos: Vec<f64>,
    /// Ids with a score but no MOS.
    pub missing_mos: Vec<String>,
    /// Ids with a MOS but no score.
    pub missing_scores: Vec<String>,
}

impl JoinedScores {
    pub fn is_complete(&self) -> bool {
        self.missing_mos.is_empty() && self.missing_scores.is_empty()
    }
}

impl MosTable {
    pub fn from_rows(rows: Vec<MosRow>, scale_note: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rows {
            if !r.mos.is_finite() {
                return Err(Error::Parse(format!("non-finite mos for `{}`", r.image_id)));
            }
            if !seen.insert(r.image_id.as_str()) {
                return Err(Error::DuplicateId(r.image_id.clone()));
            }
        }
        Ok(Self {
            rows,
            scale_note: scale_note.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.image_id == image_id)
            .map(|r| r.mos)
    }

    /// Pair `(image_id, score)` items with this table, keeping score order.
    pub fn join<'a>(&self, scores: impl IntoIterator<Item = (&'a str, f64)>) -> JoinedScores {
        let index: HashMap<&str, f64> = self
            .rows
            .iter()
            .map(|r| (r.image_id.as_str(), r.mos))
            .collect();
        let mut out = JoinedScores::default();
        let mut matched = HashSet::new();
        for (id, score) in scores {
            match index.get(id) {
                Some(&m) => {
                    out.ids.push(id.to_string());
                    out.scores.push(score);
                    out.mos.push(m);
                    matched.insert(id.to_string());
                }
                None => out.missing_mos.push(id.to_string()),
            }
        }
        out.missing_scores = self
            .rows
            .iter()
            .filter(|r| !matched.contains(&r.image_id))
            .map(|r| r.image_id.clone())
            .collect();
        out
    }
}

/// Read a CSV with header `image_id,mos`. Lines starting with `#` are ignored.
pub fn load_mos(path: &Path) -> Result<MosTable> {
    if !path.is_file() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .clone();
    if headers.len() < 2 || &headers[0] != "image_id" || &headers[1] != "mos" {
        return Err(Error::Parse(format!(
            "expected header `image_id,mos`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let mos: f64 = record[1]
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad mos `{}`", line + 1, &record[1])))?;
        rows.push(MosRow {
            image_id: record[0].to_string(),
            mos,
        });
    }
    MosTable::from_rows(rows, "")
}
