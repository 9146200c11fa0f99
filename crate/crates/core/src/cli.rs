//! The `cscore` command line.
//!
//! Every command reads one [`RunConfig`], writes its artifacts under the
//! output directory and records them in `manifest.json` there, together with
//! the config digest, the seeds it used, artifact hashes and wall time.
//! Estimation stores each finished ratio as it goes; rerunning `estimate`
//! after an interruption reuses the ratios already on disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{
    bin_by_score, correlate, detection_rate, equalized_group_experiment, histogram, learning_curves_by_bin,
    per_class_stats, removal_experiment, write_correlations_csv, write_curves_csv, CorrelationKind,
};
use crate::config::{Experiment, RemovalRanking, RunConfig};
use crate::dataset::{write_snapshot, Dataset};
use crate::error::{Error, Result};
use crate::estimator::{
    build_profile, export_scores, import_scores, integral_cscore, point_estimate_curve, read_batch, run_holdout,
    write_batch, ConsistencyProfile, RunBatch, ScoreTable,
};
use crate::learner::{read_checkpoint, read_trace_csv, write_checkpoint, write_trace_csv, Model, TrainerConfig, TrainingTrace};
use crate::proxies::{
    forgetting_counts, kernel_scores, learning_speed_scores, lof_scores, rbf_bandwidth, read_proxy_csv, write_proxy_csv,
    PointSet, ProxyKind, ProxyScores, Space, SpeedStatistic,
};
use crate::seed;

#[derive(Debug, Parser)]
#[command(name = "cscore", version, about = "Per-example consistency scores, proxies and analyses")]
pub struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Override a config value by dot path, e.g. `estimator.runs_per_ratio=8`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    /// Output directory (default: `out_dir` from the config, else
    /// `$CSCORE_OUT/<config stem>`, else `runs/<config stem>`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    /// Master seed, overriding the config's.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or load the dataset and write it as a snapshot.
    Synth,
    /// Holdout retraining over every ratio; writes scores.csv.
    Estimate,
    /// Compute proxy scores.
    Proxy {
        /// Proxy kinds (`C`, `C_L`, `C_pm_L`, `C_LOF`, `cum_acc`, `cum_pL`,
        /// `cum_pmax`, `cum_entropy`, `forgetting`) or the groups `kernel`,
        /// `lof`, `speed`.
        #[arg(long, value_name = "KIND")]
        kind: Vec<String>,
        /// Representation for kernel and LOF proxies.
        #[arg(long, value_parser = parse_space)]
        space: Option<Space>,
        /// Trained model for the hidden space (default: train one).
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Histogram, per-class statistics, correlations, detection and curves.
    Analyze,
    /// Removal and equal-group retraining experiments.
    Experiment {
        #[arg(long, value_enum)]
        name: Vec<ExperimentName>,
    },
    /// Aggregate the stored batches into a score file.
    Export {
        #[arg(long, value_enum, default_value = "csv")]
        format: ExportFormat,
        /// Destination (default: `<out>/export/scores.<format>`).
        #[arg(long, value_name = "PATH")]
        to: Option<PathBuf>,
    },
    /// Check a config and list every violation.
    Validate {
        /// Config to check (default: `--config`).
        path: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    Removal,
    Equalized,
}

fn parse_space(s: &str) -> std::result::Result<Space, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub status: Status,
    pub config_digest: String,
    pub seeds: BTreeMap<String, u64>,
    pub artifacts: Vec<Artifact>,
    pub wall_time_secs: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub completed: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub commands: BTreeMap<String, CommandRecord>,
}

impl Manifest {
    pub fn load(out: &Path) -> Result<Manifest> {
        let path = out.join("manifest.json");
        match fs::read_to_string(&path) {
            Ok(text) => Ok(serde_json::from_str(&text)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    fn save(&mut self, out: &Path) -> Result<()> {
        self.tool = "cscore".into();
        self.version = env!("CARGO_PKG_VERSION").into();
        let path = out.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Bookkeeping for one command invocation.
struct Session {
    out: PathBuf,
    name: &'static str,
    cfg: RunConfig,
    started: Instant,
    artifacts: Vec<PathBuf>,
    seeds: BTreeMap<String, u64>,
    completed: Vec<String>,
}

impl Session {
    fn new(out: PathBuf, name: &'static str, cfg: RunConfig) -> Result<Self> {
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let mut s = Session {
            out,
            name,
            seeds: BTreeMap::from([("master".to_string(), cfg.seed)]),
            cfg,
            started: Instant::now(),
            artifacts: Vec::new(),
            completed: Vec::new(),
        };
        s.record(Status::Running, None)?;
        Ok(s)
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn dir(&self, rel: &str) -> Result<PathBuf> {
        let d = self.out.join(rel);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d)
    }

    fn add(&mut self, path: PathBuf) {
        if !self.artifacts.contains(&path) {
            self.artifacts.push(path);
        }
    }

    fn seed(&mut self, name: &str, value: u64) -> u64 {
        self.seeds.insert(name.to_string(), value);
        value
    }

    fn record(&mut self, status: Status, error: Option<String>) -> Result<()> {
        let mut manifest = Manifest::load(&self.out)?;
        let artifacts = self
            .artifacts
            .iter()
            .filter(|p| p.exists())
            .map(|p| {
                Ok(Artifact {
                    path: p.strip_prefix(&self.out).unwrap_or(p).to_string_lossy().replace('\\', "/"),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        manifest.commands.insert(
            self.name.to_string(),
            CommandRecord {
                status,
                config_digest: self.cfg.digest(),
                seeds: self.seeds.clone(),
                artifacts,
                wall_time_secs: self.started.elapsed().as_secs_f64(),
                completed: self.completed.clone(),
                error,
            },
        );
        manifest.save(&self.out)
    }

    fn write_config(&mut self) -> Result<()> {
        let path = self.path(&format!("config.{}.toml", self.name));
        fs::write(&path, self.cfg.to_toml_string()).map_err(|e| Error::io(&path, e))?;
        self.add(path);
        Ok(())
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn resolve_out(cli_out: Option<&Path>, cfg: &RunConfig, config_path: Option<&Path>) -> PathBuf {
    if let Some(o) = cli_out {
        return o.to_path_buf();
    }
    if let Some(o) = &cfg.out_dir {
        return o.clone();
    }
    let stem = config_path
        .and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "default".into());
    match std::env::var_os("CSCORE_OUT") {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(stem),
        _ => PathBuf::from("runs").join(stem),
    }
}

fn load_config(cli: &Cli, path: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p, &cli.set)?,
        None => RunConfig::from_toml_str("", &cli.set)?,
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Parses arguments, runs the command and maps errors to exit status 1.
pub fn main_entry() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: &Cli) -> Result<ExitCode> {
    if let Some(jobs) = cli.jobs {
        // a second call in one process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }
    if let Command::Validate { path } = &cli.command {
        let path = path
            .as_deref()
            .or(cli.config.as_deref())
            .ok_or_else(|| Error::Config("validate needs a config path".into()))?;
        let cfg = load_config(cli, Some(path))?;
        let violations = cfg.validate();
        for v in &violations {
            println!("{v}");
        }
        if violations.is_empty() {
            println!("{}: no violations", path.display());
            return Ok(ExitCode::SUCCESS);
        }
        return Ok(ExitCode::FAILURE);
    }

    let cfg = load_config(cli, cli.config.as_deref())?;
    cfg.ensure_valid()?;
    let out = resolve_out(cli.out.as_deref(), &cfg, cli.config.as_deref());
    let name = match &cli.command {
        Command::Synth => "synth",
        Command::Estimate => "estimate",
        Command::Proxy { .. } => "proxy",
        Command::Analyze => "analyze",
        Command::Experiment { .. } => "experiment",
        Command::Export { .. } => "export",
        Command::Validate { .. } => unreachable!(),
    };
    let mut s = Session::new(out, name, cfg)?;
    s.write_config()?;
    let result = match &cli.command {
        Command::Synth => synth(&mut s),
        Command::Estimate => estimate(&mut s),
        Command::Proxy { kind, space, checkpoint } => proxy(&mut s, kind, *space, checkpoint.as_deref()),
        Command::Analyze => analyze(&mut s),
        Command::Experiment { name } => experiment(&mut s, name),
        Command::Export { format, to } => export(&mut s, *format, to.as_deref()),
        Command::Validate { .. } => unreachable!(),
    };
    match result {
        Ok(()) => {
            s.record(Status::Complete, None)?;
            log::info!("{} complete; artifacts in {}", s.name, s.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            s.record(Status::Failed, Some(e.to_string()))?;
            Err(e)
        }
    }
}

fn dataset(s: &mut Session, with_flips: bool) -> Result<Dataset> {
    let seed = s.cfg.dataset_seed();
    s.seed("dataset", seed);
    s.cfg.load_dataset(with_flips)
}

fn synth(s: &mut Session) -> Result<()> {
    let d = dataset(s, true)?;
    let (csv, bin) = write_snapshot(&d, &s.path("dataset"))?;
    s.add(csv);
    s.add(bin);
    log::info!("wrote {} examples, {} classes, dim {}", d.len(), d.num_classes(), d.dim());
    Ok(())
}

fn batch_matches(batch: &RunBatch, ratio: f64, runs: usize, n: usize, digest: &str, seed: u64) -> bool {
    batch.ratio == ratio
        && batch.runs() == runs
        && batch.examples() == n
        && batch.config_digest == digest
        && batch.seeds.first() == Some(&crate::estimator::run_seed(seed, 0))
}

/// Runs (or reloads) every configured ratio on `d`, storing batches under
/// `<prefix>/ratio_<i>`.
fn estimate_on(s: &mut Session, d: &Dataset, prefix: &str, seed: u64) -> Result<ConsistencyProfile> {
    let ratios = s.cfg.estimator.ratios.clone();
    let runs = s.cfg.estimator.runs_per_ratio;
    let trainer = s.cfg.estimator.trainer.clone();
    let digest = trainer.digest();
    let mut batches = Vec::with_capacity(ratios.len());
    for (i, &ratio) in ratios.iter().enumerate() {
        let dir = s.path(&format!("{prefix}/ratio_{i}"));
        let ratio_seed = seed::derive(seed, i as u64);
        let batch = match read_batch(&dir) {
            Ok(b) if batch_matches(&b, ratio, runs, d.len(), &digest, ratio_seed) => {
                log::info!("ratio {ratio}: reusing {} stored runs", b.runs());
                b
            }
            _ => {
                let t = Instant::now();
                let b = run_holdout(d, ratio, runs, &trainer, ratio_seed)?;
                write_batch(&b, &dir)?;
                log::info!("ratio {ratio}: {runs} runs in {:.1}s", t.elapsed().as_secs_f64());
                b
            }
        };
        for f in ["mask.csv", "loss.csv", "meta.json"] {
            s.add(dir.join(f));
        }
        s.completed.push(format!("{prefix}/ratio_{i}"));
        s.record(Status::Running, None)?;
        batches.push(batch);
    }
    build_profile(&batches)
}

fn write_profile_csv(profile: &ConsistencyProfile, labels: &[usize], path: &Path) -> Result<()> {
    let mut w = crate::error::csv_writer(path)?;
    let mut header = vec!["index".to_string(), "label".to_string()];
    header.extend(profile.ratios.iter().map(|r| format!("s={r}")));
    w.write_record(&header)?;
    for (i, &y) in labels.iter().enumerate() {
        let mut row = vec![i.to_string(), y.to_string()];
        row.extend(profile.scores.iter().map(|r| r[i].map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn estimate(s: &mut Session) -> Result<()> {
    let d = dataset(s, true)?;
    let seed = s.cfg.stage_seed("estimator");
    s.seed("estimator", seed);
    let profile = estimate_on(s, &d, "batches", seed)?;
    let table = integral_cscore(&profile, d.labels())?;
    let scores_path = s.path("scores.csv");
    export_scores(&table, &scores_path)?;
    s.add(scores_path.clone());
    s.add(PathBuf::from(format!("{}.meta.json", scores_path.display())));

    let profile_path = s.path("profile.csv");
    write_profile_csv(&profile, d.labels(), &profile_path)?;
    s.add(profile_path);

    let curve_path = s.path("point_estimate.csv");
    let mut w = crate::error::csv_writer(&curve_path)?;
    w.write_record(["ratio", "spearman"])?;
    for (r, rho) in point_estimate_curve(&profile, &table)? {
        w.write_record([r.to_string(), rho.map(|v| v.to_string()).unwrap_or_default()])?;
    }
    w.flush().map_err(|e| Error::io(&curve_path, e))?;
    s.add(curve_path);
    log::info!("{} of {} scores defined", table.defined_count(), table.len());
    Ok(())
}

fn expand_kinds(names: &[String]) -> Result<Vec<ProxyKind>> {
    let mut kinds = Vec::new();
    for n in names {
        let group: Vec<ProxyKind> = match n.as_str() {
            "kernel" => vec![ProxyKind::CPlain, ProxyKind::CL, ProxyKind::CPmL],
            "lof" => vec![ProxyKind::CLof],
            "speed" => SpeedStatistic::ALL.iter().map(|s| s.kind()).collect(),
            other => vec![other.parse()?],
        };
        for k in group {
            if !kinds.contains(&k) {
                kinds.push(k);
            }
        }
    }
    Ok(kinds)
}

fn is_geometric(kind: ProxyKind) -> bool {
    matches!(kind, ProxyKind::CPlain | ProxyKind::CL | ProxyKind::CPmL | ProxyKind::CLof)
}

fn proxy_file(kind: ProxyKind, space: Option<Space>) -> String {
    match space {
        Some(sp) => format!("proxies/{}.{sp}.csv", kind.name()),
        None => format!("proxies/{}.csv", kind.name()),
    }
}

/// The traced full-data run shared by learning-speed and hidden-space
/// proxies, reused from disk when present.
fn traced_run(s: &mut Session, d: &Dataset) -> Result<(Model, TrainingTrace)> {
    let trainer = s.cfg.proxy_trainer().clone();
    let run_seed = s.cfg.stage_seed("proxy");
    s.seed("proxy", run_seed);
    let ckpt = s.path("proxy_run/model.ckpt");
    let trace_path = s.path("proxy_run/trace.csv");
    let digest_path = s.path("proxy_run/trainer.sha256");
    let digest = format!("{}:{run_seed}", trainer.digest());
    if fs::read_to_string(&digest_path).ok().as_deref() == Some(digest.as_str()) {
        if let (Ok(m), Ok(t)) = (read_checkpoint(&ckpt), read_trace_csv(&trace_path)) {
            for p in [ckpt, trace_path, digest_path] {
                s.add(p);
            }
            return Ok((m, t));
        }
    }
    let all: Vec<usize> = (0..d.len()).collect();
    let (model, trace) = trainer.fit(d, &all, run_seed, None)?;
    s.dir("proxy_run")?;
    write_checkpoint(&model, &ckpt)?;
    write_trace_csv(&trace, &trace_path)?;
    fs::write(&digest_path, &digest).map_err(|e| Error::io(&digest_path, e))?;
    for p in [ckpt, trace_path, digest_path] {
        s.add(p);
    }
    Ok((model, trace))
}

fn proxy(s: &mut Session, kinds: &[String], space: Option<Space>, checkpoint: Option<&Path>) -> Result<()> {
    let kinds = if kinds.is_empty() {
        s.cfg.proxy.kinds.clone()
    } else {
        expand_kinds(kinds)?
    };
    let space = space.unwrap_or(s.cfg.proxy.space);
    let d = dataset(s, true)?;
    s.dir("proxies")?;
    let needs_trace = kinds.iter().any(|k| !is_geometric(*k));
    let needs_model = space == Space::Hidden && checkpoint.is_none() && kinds.iter().any(|k| is_geometric(*k));
    let run = if needs_trace || needs_model {
        Some(traced_run(s, &d)?)
    } else {
        None
    };

    let mut outputs: Vec<(ProxyScores, serde_json::Value)> = Vec::new();
    if kinds.iter().any(|k| is_geometric(*k)) {
        let points = match space {
            Space::Input => PointSet::from_dataset(&d),
            Space::Hidden => {
                let loaded;
                let model = match checkpoint {
                    Some(p) => {
                        loaded = read_checkpoint(p)?;
                        &loaded
                    }
                    None => &run.as_ref().expect("trained above").0,
                };
                PointSet::from_hidden(&model.penultimate(d.features(), d.dim())?, d.labels())?
            }
        };
        if kinds.iter().any(|k| matches!(k, ProxyKind::CPlain | ProxyKind::CL | ProxyKind::CPmL)) {
            let bw_seed = s.seed("bandwidth", s.cfg.stage_seed("bandwidth"));
            let h = rbf_bandwidth(&points, s.cfg.proxy.bandwidth_cap, bw_seed)?;
            let ks = kernel_scores(&points, h)?;
            for &k in &kinds {
                if let Some(p) = ks.proxy(k, space) {
                    outputs.push((p, json!({ "bandwidth": h, "bandwidth_cap": s.cfg.proxy.bandwidth_cap })));
                }
            }
        }
        if kinds.contains(&ProxyKind::CLof) {
            let k = s.cfg.proxy.k_neighbors;
            outputs.push((lof_scores(&points, k)?, json!({ "k_neighbors": k })));
        }
    }
    if let Some((_, trace)) = &run {
        let up_to = s.cfg.proxy.up_to_epoch.unwrap_or(trace.num_epochs());
        for &k in &kinds {
            if let Some(stat) = SpeedStatistic::from_kind(k) {
                outputs.push((learning_speed_scores(trace, stat, up_to)?, json!({ "up_to_epoch": up_to })));
            } else if k == ProxyKind::Forgetting {
                outputs.push((forgetting_counts(trace)?, json!({ "epochs": trace.num_epochs() })));
            }
        }
    }
    for (p, extra) in outputs {
        let path = s.path(&proxy_file(p.kind, p.space));
        write_proxy_csv(&p, &path)?;
        let meta_path = PathBuf::from(format!("{}.meta.json", path.display()));
        let mut meta = json!({
            "kind": p.kind,
            "space": p.space,
            "orientation": p.orientation,
            "examples": p.len(),
        });
        if let (Some(m), Some(e)) = (meta.as_object_mut(), extra.as_object()) {
            m.extend(e.clone());
        }
        write_json(&meta_path, &meta)?;
        log::info!("wrote {}", path.display());
        s.add(path);
        s.add(meta_path);
    }
    Ok(())
}

fn proxy_files(out: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(out.join("proxies"))
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    files
}

fn analyze(s: &mut Session) -> Result<()> {
    let table = import_scores(&s.path("scores.csv"))?;
    let d = dataset(s, true)?;
    if table.len() != d.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            actual: table.len(),
        });
    }
    let dir = s.dir("analysis")?;
    let scores = table.scores();
    let a = s.cfg.analysis.clone();

    let hist = histogram(&scores, a.bins)?;
    let hist_path = dir.join("histogram.csv");
    let mut w = crate::error::csv_writer(&hist_path)?;
    w.write_record(["bin", "lo", "hi", "count"])?;
    for (b, c) in hist.counts.iter().enumerate() {
        let lo = b as f64 / a.bins as f64;
        let hi = (b + 1) as f64 / a.bins as f64;
        w.write_record([b.to_string(), lo.to_string(), hi.to_string(), c.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&hist_path, e))?;
    s.add(hist_path);

    let stats = per_class_stats(&scores, d.labels())?;
    let stats_path = dir.join("per_class.csv");
    let mut w = crate::error::csv_writer(&stats_path)?;
    w.write_record(["class", "count", "mean", "sd"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in &stats {
        w.write_record([c.class.to_string(), c.count.to_string(), opt(c.mean), opt(c.sd)])?;
    }
    w.flush().map_err(|e| Error::io(&stats_path, e))?;
    s.add(stats_path);

    let reference = table.scores_nan();
    let gamma = s.cfg.gamma();
    let mut correlations = BTreeMap::new();
    let mut detection = BTreeMap::new();
    for file in proxy_files(&s.out) {
        let name = file.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default();
        let p = read_proxy_csv(&file)?;
        let dense = p.dense(d.len());
        let rows: Vec<_> = [CorrelationKind::Spearman, CorrelationKind::Kendall]
            .into_iter()
            .filter_map(|k| correlate(k, &dense, &reference).ok())
            .collect();
        let path = dir.join(format!("correlations.{name}.csv"));
        write_correlations_csv(&rows, &path)?;
        s.add(path);
        correlations.insert(name.clone(), rows);
        if gamma > 0.0 && d.corruption_mask().is_some_and(|m| m.iter().any(|&b| b)) {
            detection.insert(name, detection_rate(&p, d.corruption_mask(), gamma)?);
        }
    }
    if !detection.is_empty() {
        let path = dir.join("detection.csv");
        let mut w = crate::error::csv_writer(&path)?;
        w.write_record(["proxy", "gamma", "rate"])?;
        for (name, rate) in &detection {
            w.write_record([name.clone(), gamma.to_string(), rate.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        s.add(path);
    }

    let mut curves_summary = serde_json::Value::Null;
    if let Ok(trace) = read_trace_csv(&s.path("proxy_run/trace.csv")) {
        let bins = bin_by_score(&scores, a.bins, a.scheme)?;
        let curves = learning_curves_by_bin(&trace, &bins)?;
        let path = dir.join("curves.csv");
        write_curves_csv(&curves, &path)?;
        s.add(path);
        curves_summary = json!({ "bins": a.bins, "scheme": a.scheme, "sizes": curves.sizes });
    }

    let summary_path = dir.join("summary.json");
    write_json(
        &summary_path,
        &json!({
            "config_digest": s.cfg.digest(),
            "examples": table.len(),
            "defined": table.defined_count(),
            "undefined": hist.undefined,
            "out_of_range": hist.out_of_range,
            "gamma": gamma,
            "correlations": correlations,
            "detection": detection,
            "curves": curves_summary,
            "provenance": table.provenance,
        }),
    )?;
    s.add(summary_path);
    Ok(())
}

fn default_removal_counts(n: usize, gamma: f64) -> Vec<usize> {
    let g = ((gamma.max(0.05)) * n as f64).round() as usize;
    let mut counts: Vec<usize> = [0, g / 2, g, 2 * g, 4 * g].into_iter().filter(|&c| c < n).collect();
    counts.dedup();
    counts
}

fn removal(s: &mut Session) -> Result<()> {
    let clean = dataset(s, false)?;
    let seed = s.seed("analysis", s.cfg.stage_seed("analysis"));
    let a = s.cfg.analysis.clone();
    let (train, test) = clean.split(a.test_fraction, seed::derive_named(seed, "split"))?;
    let flip = s.cfg.dataset.flip_fraction;
    let train = if flip > 0.0 {
        train.flip_labels(flip, seed::derive_named(seed, "flips"))?
    } else {
        train
    };
    let trainer = s.cfg.estimator.trainer.clone();
    let ranking: Vec<Option<f64>> = match a.removal_ranking {
        RemovalRanking::Cscore => {
            let est_seed = seed::derive_named(seed, "estimator");
            let profile = estimate_on(s, &train, "experiments/removal_batches", est_seed)?;
            integral_cscore(&profile, train.labels())?.scores()
        }
        RemovalRanking::CumPl | RemovalRanking::CumAcc => {
            let stat = if a.removal_ranking == RemovalRanking::CumPl {
                SpeedStatistic::ProbCorrect
            } else {
                SpeedStatistic::Accuracy
            };
            let all: Vec<usize> = (0..train.len()).collect();
            let (_, trace) = s
                .cfg
                .proxy_trainer()
                .fit(&train, &all, seed::derive_named(seed, "ranking"), None)?;
            let p = learning_speed_scores(&trace, stat, trace.num_epochs())?;
            p.dense(train.len()).into_iter().map(|v| (!v.is_nan()).then_some(v)).collect()
        }
    };
    let counts = if a.removal_counts.is_empty() {
        default_removal_counts(train.len(), s.cfg.gamma())
    } else {
        a.removal_counts.clone()
    };
    let points = removal_experiment(&train, &test, &ranking, &counts, &trainer, a.repeats, seed)?;
    let dir = s.dir("experiments")?;
    let path = dir.join("removal.csv");
    let mut w = crate::error::csv_writer(&path)?;
    w.write_record(["count", "arm", "mean_accuracy", "std_accuracy", "degenerate"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for p in &points {
        for (arm, r) in [("lowest", &p.lowest), ("random", &p.random)] {
            w.write_record([p.count.to_string(), arm.into(), opt(r.mean), opt(r.std), r.degenerate.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    s.add(path);
    let json_path = dir.join("removal.json");
    write_json(
        &json_path,
        &json!({ "train": train.len(), "test": test.len(), "ranking": a.removal_ranking, "points": points }),
    )?;
    s.add(json_path);
    Ok(())
}

fn equalized(s: &mut Session) -> Result<()> {
    let table: ScoreTable = import_scores(&s.path("scores.csv"))?;
    let d = dataset(s, true)?;
    let seed = s.seed("analysis", s.cfg.stage_seed("analysis"));
    let a = s.cfg.analysis.clone();
    let g = equalized_group_experiment(
        &d,
        &table.scores(),
        a.bins,
        a.group_size,
        &s.cfg.estimator.trainer,
        seed::derive_named(seed, "equalized"),
    )?;
    let dir = s.dir("experiments")?;
    let path = dir.join("equalized_curves.csv");
    write_curves_csv(&g.curves, &path)?;
    s.add(path);
    let json_path = dir.join("equalized.json");
    write_json(
        &json_path,
        &json!({
            "bins": g.bins.bins,
            "group_sizes": g.groups.iter().map(Vec::len).collect::<Vec<_>>(),
            "truncated": g.truncated,
        }),
    )?;
    s.add(json_path);
    Ok(())
}

fn experiment(s: &mut Session, names: &[ExperimentName]) -> Result<()> {
    let selected: Vec<Experiment> = if names.is_empty() {
        s.cfg.analysis.experiments.clone()
    } else {
        names
            .iter()
            .map(|n| match n {
                ExperimentName::Removal => Experiment::Removal,
                ExperimentName::Equalized => Experiment::Equalized,
            })
            .collect()
    };
    for e in selected {
        match e {
            Experiment::Removal => removal(s)?,
            Experiment::Equalized => equalized(s)?,
        }
    }
    Ok(())
}

fn export(s: &mut Session, format: ExportFormat, to: Option<&Path>) -> Result<()> {
    let mut batches = Vec::new();
    for i in 0.. {
        let dir = s.path(&format!("batches/ratio_{i}"));
        if !dir.exists() {
            break;
        }
        batches.push(read_batch(&dir)?);
    }
    if batches.is_empty() {
        return Err(Error::invalid(format!("no stored batches under {}", s.path("batches").display())));
    }
    let d = dataset(s, true)?;
    let table = integral_cscore(&build_profile(&batches)?, d.labels())?;
    let ext = match format {
        ExportFormat::Csv => "csv",
        ExportFormat::Json => "json",
    };
    let dest = match to {
        Some(p) => p.to_path_buf(),
        None => s.dir("export")?.join(format!("scores.{ext}")),
    };
    match format {
        ExportFormat::Csv => {
            export_scores(&table, &dest)?;
            s.add(PathBuf::from(format!("{}.meta.json", dest.display())));
        }
        ExportFormat::Json => write_json(
            &dest,
            &json!({ "entries": table.entries, "provenance": table.provenance }),
        )?,
    }
    s.add(dest);
    Ok(())
}

/// Runs the `estimate` pipeline on `d` in memory, without touching disk.
pub fn estimate_in_memory(d: &Dataset, ratios: &[f64], runs: usize, trainer: &TrainerConfig, seed: u64) -> Result<ConsistencyProfile> {
    let batches = ratios
        .iter()
        .enumerate()
        .map(|(i, &r)| run_holdout(d, r, runs, trainer, seed::derive(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    build_profile(&batches)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_groups_expand() {
        let k = expand_kinds(&["kernel".into(), "C_L".into(), "lof".into()]).unwrap();
        assert_eq!(k, vec![ProxyKind::CPlain, ProxyKind::CL, ProxyKind::CPmL, ProxyKind::CLof]);
        assert!(expand_kinds(&["nope".into()]).is_err());
    }

    #[test]
    fn removal_counts_stay_below_n() {
        assert_eq!(default_removal_counts(100, 0.1), vec![0, 5, 10, 20, 40]);
        assert!(default_removal_counts(10, 0.5).iter().all(|&c| c < 10));
    }

    #[test]
    fn cli_parses_globals_after_command() {
        let cli = Cli::try_parse_from(["cscore", "proxy", "--kind", "kernel", "--space", "hidden", "--set", "seed=3"]).unwrap();
        assert!(matches!(cli.command, Command::Proxy { space: Some(Space::Hidden), .. }));
        assert_eq!(cli.set, vec!["seed=3".to_string()]);
        assert!(Cli::try_parse_from(["cscore", "bogus"]).is_err());
    }
}
