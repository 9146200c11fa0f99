//! Run configuration: one TOML file per experiment, with dot-path overrides.
//!
//! ```toml
//! seed = 7
//!
//! [dataset]
//! source = "synthetic"   # synthetic | idx | snapshot
//! preset = "benchmark"   # or an inline [dataset.synthetic] table
//! flip_fraction = 0.1
//!
//! [estimator]
//! ratios = [0.1, 0.3, 0.5, 0.7, 0.9]
//! runs_per_ratio = 40
//!
//! [estimator.trainer]
//! hidden = [64, 32]
//! optimizer = { kind = "sgd_momentum", learning_rate = 0.05, batch_size = 16, epochs = 100 }
//! schedule = { kind = "triangular", peak = 0.15 }
//! ```
//!
//! Seeds not given explicitly derive from the master `seed` by tag
//! (`dataset`, `estimator`, `proxy`, `analysis`).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::BinScheme;
use crate::dataset::{benchmark_spec, dataset_from_idx, generate_synthetic, parse_idx, read_snapshot, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::learner::TrainerConfig;
use crate::proxies::{ProxyKind, Space, DEFAULT_BANDWIDTH_CAP, DEFAULT_K_NEIGHBORS};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    #[default]
    Synthetic,
    Idx,
    Snapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(default)]
    pub source: DatasetSource,
    /// Named synthetic layout; only `benchmark` exists.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub images: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    /// Snapshot stem (`<stem>.csv` and `<stem>.features.bin`).
    #[serde(default)]
    pub snapshot: Option<PathBuf>,
    #[serde(default)]
    pub num_classes: Option<usize>,
    #[serde(default)]
    pub flip_fraction: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            source: DatasetSource::Synthetic,
            preset: Some("benchmark".into()),
            synthetic: None,
            images: None,
            labels: None,
            snapshot: None,
            num_classes: None,
            flip_fraction: 0.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(default = "default_ratios")]
    pub ratios: Vec<f64>,
    #[serde(default = "default_runs")]
    pub runs_per_ratio: usize,
    #[serde(default = "TrainerConfig::desk_default")]
    pub trainer: TrainerConfig,
}

fn default_ratios() -> Vec<f64> {
    vec![0.1, 0.3, 0.5, 0.7, 0.9]
}

fn default_runs() -> usize {
    40
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection {
            ratios: default_ratios(),
            runs_per_ratio: default_runs(),
            trainer: TrainerConfig::desk_default(),
        }
    }
}

fn default_kinds() -> Vec<ProxyKind> {
    ProxyKind::ALL.to_vec()
}

fn default_space() -> Space {
    Space::Input
}

fn default_k_neighbors() -> usize {
    DEFAULT_K_NEIGHBORS
}

fn default_bandwidth_cap() -> usize {
    DEFAULT_BANDWIDTH_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxySection {
    #[serde(default = "default_kinds")]
    pub kinds: Vec<ProxyKind>,
    #[serde(default = "default_space")]
    pub space: Space,
    #[serde(default = "default_k_neighbors")]
    pub k_neighbors: usize,
    #[serde(default = "default_bandwidth_cap")]
    pub bandwidth_cap: usize,
    /// Epochs averaged by the learning-speed proxies (default: all).
    #[serde(default)]
    pub up_to_epoch: Option<usize>,
    /// Trainer for the traced full-data run.
    #[serde(default = "TrainerConfig::proxy_default")]
    pub trainer: TrainerConfig,
}

impl Default for ProxySection {
    fn default() -> Self {
        ProxySection {
            kinds: default_kinds(),
            space: Space::Input,
            k_neighbors: DEFAULT_K_NEIGHBORS,
            bandwidth_cap: DEFAULT_BANDWIDTH_CAP,
            up_to_epoch: None,
            trainer: TrainerConfig::proxy_default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Removal,
    Equalized,
}

/// Ranking used to pick the examples removed first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalRanking {
    /// Holdout C-score estimated on the training split.
    Cscore,
    /// Cumulative correct-class probability from one traced run.
    #[default]
    CumPl,
    CumAcc,
}

fn default_bins() -> usize {
    10
}

fn default_repeats() -> usize {
    3
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_group_size() -> usize {
    20
}

fn default_experiments() -> Vec<Experiment> {
    vec![Experiment::Removal, Experiment::Equalized]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "default_experiments")]
    pub experiments: Vec<Experiment>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub scheme: BinScheme,
    /// Detection fraction; defaults to `dataset.flip_fraction`.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub removal_counts: Vec<usize>,
    #[serde(default)]
    pub removal_ranking: RemovalRanking,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_group_size")]
    pub group_size: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            experiments: default_experiments(),
            bins: default_bins(),
            scheme: BinScheme::ValueRange,
            gamma: None,
            removal_counts: Vec::new(),
            removal_ranking: RemovalRanking::CumPl,
            repeats: default_repeats(),
            test_fraction: default_test_fraction(),
            group_size: default_group_size(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub proxy: ProxySection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

/// One failed check, named by its dot path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Sets `path` (dot separated) in a TOML tree. The value is parsed as a TOML
/// literal and taken as a bare string if that fails.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad override path {path:?}")));
    }
    let mut table = root;
    for key in &keys[..keys.len() - 1] {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path {path:?}: {key} is not a table")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes dataset paths relative to `base` (the config's directory).
    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.dataset.images, &mut self.dataset.labels, &mut self.dataset.snapshot]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form, `out_dir` excluded.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut canonical = self.clone();
        canonical.out_dir = None;
        hex::encode(Sha256::digest(serde_json::to_vec(&canonical).expect("config serializes")))
    }

    pub fn dataset_seed(&self) -> u64 {
        self.dataset.seed.unwrap_or_else(|| seed::derive_named(self.seed, "dataset"))
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        seed::derive_named(self.seed, stage)
    }

    pub fn proxy_trainer(&self) -> &TrainerConfig {
        &self.proxy.trainer
    }

    pub fn gamma(&self) -> f64 {
        self.analysis.gamma.unwrap_or(self.dataset.flip_fraction)
    }

    /// Every violation found, each named by field path.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut push = |path: &str, message: String| {
            v.push(Violation {
                path: path.to_string(),
                message,
            })
        };

        let d = &self.dataset;
        if !(0.0..1.0).contains(&d.flip_fraction) {
            push("dataset.flip_fraction", format!("{} is not in [0, 1)", d.flip_fraction));
        }
        match d.source {
            DatasetSource::Synthetic => match (&d.preset, &d.synthetic) {
                (Some(p), None) if p == "benchmark" => {}
                (Some(p), None) => push("dataset.preset", format!("unknown preset {p:?}")),
                (None, Some(spec)) => {
                    if let Err(e) = spec.validate() {
                        push("dataset.synthetic", e.to_string());
                    }
                }
                (Some(_), Some(_)) => push("dataset", "give either preset or synthetic, not both".into()),
                (None, None) => push("dataset", "synthetic source needs preset or synthetic".into()),
            },
            DatasetSource::Idx => {
                if d.images.is_none() {
                    push("dataset.images", "idx source needs an images path".into());
                }
                if d.labels.is_none() {
                    push("dataset.labels", "idx source needs a labels path".into());
                }
            }
            DatasetSource::Snapshot => {
                if d.snapshot.is_none() {
                    push("dataset.snapshot", "snapshot source needs a snapshot stem".into());
                }
            }
        }
        if d.num_classes == Some(0) {
            push("dataset.num_classes", "must be >= 1".into());
        }

        let e = &self.estimator;
        if e.ratios.is_empty() {
            push("estimator.ratios", "needs at least one ratio".into());
        }
        for (i, &r) in e.ratios.iter().enumerate() {
            if !(r > 0.0 && r <= 1.0) {
                push(
                    &format!("estimator.ratios[{i}]"),
                    format!("{r} is not in (0, 1]; the subset size must be positive"),
                );
            }
        }
        if e.runs_per_ratio == 0 {
            push("estimator.runs_per_ratio", "must be >= 1".into());
        }
        trainer_violations("estimator.trainer", &e.trainer, &mut push);

        let p = &self.proxy;
        if p.k_neighbors == 0 {
            push("proxy.k_neighbors", "must be >= 1".into());
        }
        if p.bandwidth_cap < 2 {
            push("proxy.bandwidth_cap", "must be >= 2".into());
        }
        if p.up_to_epoch == Some(0) {
            push("proxy.up_to_epoch", "must be >= 1".into());
        }
        trainer_violations("proxy.trainer", &p.trainer, &mut push);
        if let Some(up) = p.up_to_epoch {
            let epochs = self.proxy_trainer().optimizer.epochs;
            if up > epochs {
                push("proxy.up_to_epoch", format!("{up} exceeds the {epochs} trained epochs"));
            }
        }

        let a = &self.analysis;
        if a.bins == 0 {
            push("analysis.bins", "must be >= 1".into());
        }
        if let Some(g) = a.gamma {
            if !(g > 0.0 && g < 1.0) {
                push("analysis.gamma", format!("{g} is not in (0, 1)"));
            }
        }
        if a.repeats == 0 {
            push("analysis.repeats", "must be >= 1".into());
        }
        if !(a.test_fraction > 0.0 && a.test_fraction < 1.0) {
            push("analysis.test_fraction", format!("{} is not in (0, 1)", a.test_fraction));
        }
        if a.group_size == 0 {
            push("analysis.group_size", "must be >= 1".into());
        }
        v
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(
                v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
            ))
        }
    }

    /// Builds the configured dataset. `with_flips = false` skips label
    /// corruption, so callers can split first and corrupt only one part.
    pub fn load_dataset(&self, with_flips: bool) -> Result<Dataset> {
        let d = &self.dataset;
        let flip = if with_flips { d.flip_fraction } else { 0.0 };
        let seed = self.dataset_seed();
        match d.source {
            DatasetSource::Synthetic => {
                let mut spec = match &d.synthetic {
                    Some(s) => s.clone(),
                    None => benchmark_spec(0.0, seed),
                };
                spec.flip_fraction = flip;
                spec.seed = seed;
                generate_synthetic(&spec)
            }
            DatasetSource::Idx => {
                let read = |p: &Option<PathBuf>, what: &str| -> Result<Vec<u8>> {
                    let p = p.as_ref().ok_or_else(|| Error::Config(format!("dataset.{what} missing")))?;
                    fs::read(p).map_err(|e| Error::io(p, e))
                };
                let images = parse_idx(&read(&d.images, "images")?)?;
                let labels = parse_idx(&read(&d.labels, "labels")?)?;
                flip_loaded(dataset_from_idx(&images, &labels, d.num_classes)?, flip, seed)
            }
            DatasetSource::Snapshot => {
                let stem = d.snapshot.as_ref().ok_or_else(|| Error::Config("dataset.snapshot missing".into()))?;
                flip_loaded(read_snapshot(stem, d.num_classes)?, flip, seed)
            }
        }
    }
}

fn flip_loaded(dataset: Dataset, flip: f64, seed: u64) -> Result<Dataset> {
    if flip > 0.0 {
        dataset.flip_labels(flip, seed::derive_named(seed, "flips"))
    } else {
        Ok(dataset)
    }
}

fn trainer_violations(prefix: &str, t: &TrainerConfig, push: &mut impl FnMut(&str, String)) {
    if t.hidden.is_empty() || t.hidden.contains(&0) {
        push(&format!("{prefix}.hidden"), "needs at least one positive width".into());
    }
    if let Err(e) = t.optimizer.validate() {
        push(&format!("{prefix}.optimizer"), e.to_string());
    }
    if let Err(e) = t.schedule.validate() {
        push(&format!("{prefix}.schedule"), e.to_string());
    }
}
