//! Dataset snapshot: `<stem>.csv` with `index,label,flipped` and
//! `<stem>.features.bin` holding a 16-byte header (`CSCD`, version, N, d as
//! little-endian `u32`) followed by N·d little-endian `f32` values, row-major.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Dataset;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"CSCD";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    index: usize,
    label: usize,
    flipped: u8,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("csv"), stem.with_extension("features.bin"))
}

/// Writes the snapshot pair and returns the two paths (csv, features).
pub fn write_snapshot(dataset: &Dataset, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let (csv_path, bin_path) = paths(stem);
    let mut w = crate::error::csv_writer(&csv_path)?;
    let mask = dataset.corruption_mask();
    for (i, &label) in dataset.labels().iter().enumerate() {
        w.serialize(Row {
            index: i,
            label,
            flipped: u8::from(mask.is_some_and(|m| m[i])),
        })?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let n = u32::try_from(dataset.len()).map_err(|_| Error::invalid("too many examples for snapshot"))?;
    let d = u32::try_from(dataset.dim()).map_err(|_| Error::invalid("dimension too large for snapshot"))?;
    let mut bytes = Vec::with_capacity(16 + 4 * dataset.features().len());
    bytes.extend_from_slice(SNAPSHOT_MAGIC);
    bytes.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&n.to_le_bytes());
    bytes.extend_from_slice(&d.to_le_bytes());
    for &x in dataset.features() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(&bin_path, bytes).map_err(|e| Error::io(&bin_path, e))?;
    Ok((csv_path, bin_path))
}

/// Reads a snapshot pair. The CSV does not record the class count, so it
/// defaults to one past the largest label unless given.
pub fn read_snapshot(stem: &Path, num_classes: Option<usize>) -> Result<Dataset> {
    let (csv_path, bin_path) = paths(stem);
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let malformed = |message: String| Error::Malformed {
        path: bin_path.clone(),
        line: 0,
        message,
    };
    if bytes.len() < 16 || &bytes[0..4] != SNAPSHOT_MAGIC {
        return Err(malformed("missing CSCD header".into()));
    }
    let word = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
    let version = word(4);
    if version != SNAPSHOT_VERSION {
        return Err(malformed(format!("unsupported snapshot version {version}")));
    }
    let (n, d) = (word(8) as usize, word(12) as usize);
    if bytes.len() != 16 + 4 * n * d {
        return Err(malformed(format!(
            "expected {} feature bytes, found {}",
            4 * n * d,
            bytes.len() - 16
        )));
    }
    let features: Vec<f32> = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let mut r = crate::error::csv_reader(&csv_path)?;
    let mut labels = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for (i, row) in r.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Malformed {
            path: csv_path.clone(),
            line,
            message: e.to_string(),
        })?;
        if row.index != i {
            return Err(Error::Malformed {
                path: csv_path.clone(),
                line,
                message: format!("index {} out of order, expected {i}", row.index),
            });
        }
        labels.push(row.label);
        mask.push(row.flipped != 0);
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: labels.len(),
        });
    }
    let classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    Dataset::new(features, d, labels, classes)?.with_corruption_mask(mask)
}
