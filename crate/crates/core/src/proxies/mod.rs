//! Cheap proxies for the C-score.
//!
//! All proxies are oriented so that a higher score means "more consistent":
//! the LOF value, the softmax entropy and the forgetting count are negated on
//! ingestion and flagged as such in [`Orientation`].

mod kernel;
mod lof;
mod speed;

pub use kernel::{kernel_scores, rbf_bandwidth, KernelScores, DEFAULT_BANDWIDTH_CAP};
pub use lof::{lof_scores, lof_values, DEFAULT_K_NEIGHBORS};
pub use speed::{forgetting_counts, learning_speed_scores, SpeedStatistic};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Input,
    Hidden,
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Space::Input => "input",
            Space::Hidden => "hidden",
        })
    }
}

impl FromStr for Space {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input" => Ok(Space::Input),
            "hidden" => Ok(Space::Hidden),
            other => Err(Error::invalid(format!("unknown space {other:?}"))),
        }
    }
}

/// Feature rows (raw inputs or penultimate activations) with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    pub space: Space,
}

impl PointSet {
    pub fn new(data: Vec<f64>, dim: usize, labels: Vec<usize>, space: Space) -> Result<Self> {
        if dim == 0 || data.len() != dim * labels.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * labels.len(),
                actual: data.len(),
            });
        }
        Ok(PointSet {
            data,
            dim,
            labels,
            space,
        })
    }

    pub fn from_dataset(dataset: &Dataset) -> Self {
        PointSet {
            data: dataset.features().iter().map(|&v| f64::from(v)).collect(),
            dim: dataset.dim(),
            labels: dataset.labels().to_vec(),
            space: Space::Input,
        }
    }

    pub fn from_hidden(rows: &Array2<f64>, labels: &[usize]) -> Result<Self> {
        PointSet::new(rows.iter().copied().collect(), rows.ncols(), labels.to_vec(), Space::Hidden)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn select(&self, indices: &[usize]) -> PointSet {
        PointSet {
            data: indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            dim: self.dim,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            space: self.space,
        }
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProxyKind {
    #[serde(rename = "C")]
    CPlain,
    #[serde(rename = "C_L")]
    CL,
    #[serde(rename = "C_pm_L")]
    CPmL,
    #[serde(rename = "C_LOF")]
    CLof,
    #[serde(rename = "cum_acc")]
    CumAcc,
    #[serde(rename = "cum_pL")]
    CumPL,
    #[serde(rename = "cum_pmax")]
    CumPmax,
    #[serde(rename = "cum_entropy")]
    CumEntropy,
    #[serde(rename = "forgetting")]
    Forgetting,
}

impl ProxyKind {
    pub const ALL: [ProxyKind; 9] = [
        ProxyKind::CPlain,
        ProxyKind::CL,
        ProxyKind::CPmL,
        ProxyKind::CLof,
        ProxyKind::CumAcc,
        ProxyKind::CumPL,
        ProxyKind::CumPmax,
        ProxyKind::CumEntropy,
        ProxyKind::Forgetting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProxyKind::CPlain => "C",
            ProxyKind::CL => "C_L",
            ProxyKind::CPmL => "C_pm_L",
            ProxyKind::CLof => "C_LOF",
            ProxyKind::CumAcc => "cum_acc",
            ProxyKind::CumPL => "cum_pL",
            ProxyKind::CumPmax => "cum_pmax",
            ProxyKind::CumEntropy => "cum_entropy",
            ProxyKind::Forgetting => "forgetting",
        }
    }
}

impl fmt::Display for ProxyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProxyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ProxyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown proxy kind {s:?}")))
    }
}

/// How the stored score relates to the underlying statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Identity,
    Negated,
}

/// One oriented proxy score per example; `indices[j]` is the dataset index of
/// `scores[j]`. Sorting descending puts the most consistent examples first.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyScores {
    pub kind: ProxyKind,
    pub space: Option<Space>,
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
    pub orientation: Orientation,
}

impl ProxyScores {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Scores spread over `0..n` by dataset index, NaN where absent.
    pub fn dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![f64::NAN; n];
        for (&i, &s) in self.indices.iter().zip(&self.scores) {
            if i < n {
                out[i] = s;
            }
        }
        out
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ProxyRow {
    index: usize,
    kind: ProxyKind,
    score: f64,
    orientation: Orientation,
}

/// CSV `index,kind,score,orientation`.
pub fn write_proxy_csv(proxy: &ProxyScores, path: &Path) -> Result<()> {
    let mut w = crate::error::csv_writer(path)?;
    for (&index, &score) in proxy.indices.iter().zip(&proxy.scores) {
        w.serialize(ProxyRow {
            index,
            kind: proxy.kind,
            score,
            orientation: proxy.orientation,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_proxy_csv(path: &Path) -> Result<ProxyScores> {
    let mut r = crate::error::csv_reader(path)?;
    let mut out: Option<ProxyScores> = None;
    for (i, row) in r.deserialize::<ProxyRow>().enumerate() {
        let line = i + 2;
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        };
        let row = row.map_err(|e| malformed(e.to_string()))?;
        let p = out.get_or_insert_with(|| ProxyScores {
            kind: row.kind,
            space: None,
            indices: Vec::new(),
            scores: Vec::new(),
            orientation: row.orientation,
        });
        if p.kind != row.kind || p.orientation != row.orientation {
            return Err(malformed("mixed proxy kinds in one file".into()));
        }
        p.indices.push(row.index);
        p.scores.push(row.score);
    }
    out.ok_or_else(|| Error::Malformed {
        path: path.to_path_buf(),
        line: 1,
        message: "no proxy rows".into(),
    })
}
