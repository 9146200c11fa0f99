//! Score tables and their CSV form `index,label,score` (undefined = empty
//! field). Provenance, when present, goes to a `<path>.meta.json` sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub index: usize,
    pub label: usize,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub ratios: Vec<f64>,
    pub runs_per_ratio: Vec<usize>,
    pub seeds: Vec<Vec<u64>>,
}

/// One score per example, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub entries: Vec<ScoreEntry>,
    pub provenance: Option<Provenance>,
}

impl ScoreTable {
    pub fn new(scores: Vec<Option<f64>>, labels: &[usize]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                actual: scores.len(),
            });
        }
        Ok(ScoreTable {
            entries: scores
                .into_iter()
                .zip(labels)
                .enumerate()
                .map(|(index, (score, &label))| ScoreEntry { index, label, score })
                .collect(),
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scores(&self) -> Vec<Option<f64>> {
        self.entries.iter().map(|e| e.score).collect()
    }

    /// Scores with undefined entries as NaN.
    pub fn scores_nan(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score.unwrap_or(f64::NAN)).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn defined_count(&self) -> usize {
        self.entries.iter().filter(|e| e.score.is_some()).count()
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn export_scores(table: &ScoreTable, path: &Path) -> Result<()> {
    let mut w = crate::error::csv_writer(path)?;
    for e in &table.entries {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let meta = sidecar(path);
    match &table.provenance {
        Some(p) => {
            fs::write(&meta, serde_json::to_string_pretty(p)? + "\n").map_err(|e| Error::io(&meta, e))?;
        }
        None if meta.exists() => fs::remove_file(&meta).map_err(|e| Error::io(&meta, e))?,
        None => {}
    }
    Ok(())
}

pub fn import_scores(path: &Path) -> Result<ScoreTable> {
    let mut r = crate::error::csv_reader(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["index", "label", "score"] {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: "header must be index,label,score".into(),
        });
    }
    let mut entries = Vec::new();
    for (i, row) in r.deserialize::<ScoreEntry>().enumerate() {
        let line = i + 2;
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        };
        let e = row.map_err(|e| malformed(e.to_string()))?;
        if e.index != i {
            return Err(malformed(format!("index {} out of order, expected {i}", e.index)));
        }
        if let Some(s) = e.score {
            if s.is_nan() {
                return Err(malformed("NaN score; use an empty field for undefined".into()));
            }
        }
        entries.push(e);
    }
    let meta = sidecar(path);
    let provenance = if meta.exists() {
        let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };
    Ok(ScoreTable { entries, provenance })
}
