//! C ABI over `cscore`.
//!
//! Objects cross the boundary as opaque handles: create them with a
//! `cs_*_new`/`cs_*_load` call and release them with the matching `cs_*_free`.
//! Every fallible call returns a [`CsStatus`]; after a non-OK status,
//! [`cs_last_error`] holds a message for the calling thread. Output buffers
//! are caller-owned, and undefined scores are written as NaN.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use cscore::config::RunConfig;
use cscore::dataset::Dataset;
use cscore::estimator::{aggregate_scores, integral_cscore, LossMatrix, MaskMatrix, ScoreTable};
use cscore::proxies::{
    forgetting_counts, kernel_scores, learning_speed_scores, lof_scores, rbf_bandwidth, PointSet, ProxyKind, Space,
    SpeedStatistic,
};
use cscore::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Io = 4,
    Parse = 5,
    Config = 6,
    Degenerate = 7,
    Internal = 8,
}

/// Parsed and validated run configuration.
pub struct CsConfig(RunConfig);

/// Feature matrix with labels.
pub struct CsDataset(Dataset);

/// Per-example consistency scores.
pub struct CsScores(ScoreTable);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> CsStatus {
    match err {
        Error::Invalid(_) => CsStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => CsStatus::DimensionMismatch,
        Error::Io { .. } => CsStatus::Io,
        Error::Idx { .. } | Error::Malformed { .. } | Error::Csv(_) | Error::Json(_) => CsStatus::Parse,
        Error::Config(_) => CsStatus::Config,
        Error::Degenerate(_) => CsStatus::Degenerate,
        Error::Run { source, .. } => status_of(source),
    }
}

struct Fail(CsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CsStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(CsStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus last-error message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            CsStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn in_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

fn copy_scores(values: &[f64], out: &mut [f64]) -> Result<(), Fail> {
    if out.len() != values.len() {
        return Err(Fail(
            CsStatus::DimensionMismatch,
            format!("output buffer holds {}, need {}", out.len(), values.len()),
        ));
    }
    out.copy_from_slice(values);
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn cs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads and validates a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_config_load(path: *const c_char, out: *mut *mut CsConfig) -> CsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let cfg = RunConfig::load(Path::new(path), &[])?;
        cfg.ensure_valid()?;
        write_out(out, CsConfig(cfg))
    })
}

/// Parses and validates a configuration from TOML text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_config_parse(text: *const c_char, out: *mut *mut CsConfig) -> CsStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let cfg = RunConfig::from_toml_str(text, &[])?;
        cfg.ensure_valid()?;
        write_out(out, CsConfig(cfg))
    })
}

/// Applies one `key=value` override and revalidates.
///
/// # Safety
/// `cfg` must come from this library; `assignment` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cs_config_set(cfg: *mut CsConfig, assignment: *const c_char) -> CsStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("config"))?;
        let assignment = str_arg(assignment, "assignment")?;
        let next = RunConfig::from_toml_str(&cfg.0.to_toml_string(), &[assignment.to_string()])?;
        next.ensure_valid()?;
        cfg.0 = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cs_config_free(cfg: *mut CsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Builds the dataset a configuration describes, with or without its label
/// flips.
///
/// # Safety
/// `cfg` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_dataset_from_config(cfg: *const CsConfig, with_flips: bool, out: *mut *mut CsDataset) -> CsStatus {
    guard(|| {
        let cfg = handle(cfg, "config")?;
        write_out(out, CsDataset(cfg.0.load_dataset(with_flips)?))
    })
}

/// Copies `n × dim` row-major features and `n` labels into a new dataset.
///
/// # Safety
/// `features` must hold `n * dim` values, `labels` `n` values.
#[no_mangle]
pub unsafe extern "C" fn cs_dataset_new(
    features: *const f32,
    labels: *const u32,
    n: usize,
    dim: usize,
    num_classes: usize,
    out: *mut *mut CsDataset,
) -> CsStatus {
    guard(|| {
        let len = n.checked_mul(dim).ok_or_else(|| invalid("n * dim overflows"))?;
        let features = in_slice(features, len, "features")?.to_vec();
        let labels = in_slice(labels, n, "labels")?.iter().map(|&y| y as usize).collect();
        write_out(out, CsDataset(Dataset::new(features, dim, labels, num_classes)?))
    })
}

/// # Safety
/// `d` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cs_dataset_len(d: *const CsDataset) -> usize {
    d.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `d` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cs_dataset_dim(d: *const CsDataset) -> usize {
    d.as_ref().map_or(0, |d| d.0.dim())
}

/// Writes the labels of `d` into `out` (length `len` must equal the dataset size).
///
/// # Safety
/// `d` must be a live handle and `out` hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn cs_dataset_labels(d: *const CsDataset, out: *mut u32, len: usize) -> CsStatus {
    guard(|| {
        let d = handle(d, "dataset")?;
        let out = out_slice(out, len, "out")?;
        if len != d.0.len() {
            return Err(Fail(CsStatus::DimensionMismatch, format!("buffer {len}, dataset {}", d.0.len())));
        }
        for (o, &y) in out.iter_mut().zip(d.0.labels()) {
            *o = y as u32;
        }
        Ok(())
    })
}

/// Writes 1 for examples whose label was flipped and 0 otherwise. Fails if
/// the dataset carries no corruption mask.
///
/// # Safety
/// `d` must be a live handle and `out` hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn cs_dataset_corruption_mask(d: *const CsDataset, out: *mut u8, len: usize) -> CsStatus {
    guard(|| {
        let d = handle(d, "dataset")?;
        let mask = d.0.corruption_mask().ok_or_else(|| invalid("dataset has no corruption mask"))?;
        let out = out_slice(out, len, "out")?;
        if len != mask.len() {
            return Err(Fail(CsStatus::DimensionMismatch, format!("buffer {len}, dataset {}", mask.len())));
        }
        for (o, &m) in out.iter_mut().zip(mask) {
            *o = u8::from(m);
        }
        Ok(())
    })
}

/// # Safety
/// `d` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cs_dataset_free(d: *mut CsDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Holdout estimation over the configured ratios and runs, then the integral
/// score. Seeded from the configuration's master seed.
///
/// # Safety
/// `cfg` and `d` must be live handles and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_estimate(cfg: *const CsConfig, d: *const CsDataset, out: *mut *mut CsScores) -> CsStatus {
    guard(|| {
        let cfg = &handle(cfg, "config")?.0;
        let d = &handle(d, "dataset")?.0;
        let est = &cfg.estimator;
        let profile = cscore::cli::estimate_in_memory(
            d,
            &est.ratios,
            est.runs_per_ratio,
            &est.trainer,
            cfg.stage_seed("estimator"),
        )?;
        write_out(out, CsScores(integral_cscore(&profile, d.labels())?))
    })
}

/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cs_scores_len(s: *const CsScores) -> usize {
    s.as_ref().map_or(0, |s| s.0.len())
}

/// Copies the scores into `out` (NaN where undefined).
///
/// # Safety
/// `s` must be a live handle and `out` hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn cs_scores_copy(s: *const CsScores, out: *mut f64, len: usize) -> CsStatus {
    guard(|| {
        let s = handle(s, "scores")?;
        copy_scores(&s.0.scores_nan(), out_slice(out, len, "out")?)
    })
}

/// # Safety
/// `s` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cs_scores_free(s: *mut CsScores) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Holdout accuracy from `runs × n` row-major 0/1 matrices: `mask` marks the
/// training subset of each run, `loss` the misclassified examples.
///
/// # Safety
/// `mask` and `loss` must hold `runs * n` bytes, `out` `n` values.
#[no_mangle]
pub unsafe extern "C" fn cs_aggregate(mask: *const u8, loss: *const u8, runs: usize, n: usize, out: *mut f64) -> CsStatus {
    guard(|| {
        let len = runs.checked_mul(n).ok_or_else(|| invalid("runs * n overflows"))?;
        let rows = |p: &[u8]| -> Vec<Vec<bool>> { p.chunks(n.max(1)).map(|r| r.iter().map(|&b| b != 0).collect()).collect() };
        let mask = MaskMatrix::from_rows(rows(in_slice(mask, len, "mask")?))?;
        let loss = LossMatrix::from_rows(rows(in_slice(loss, len, "loss")?))?;
        let scores: Vec<f64> = aggregate_scores(&mask, &loss)?
            .into_iter()
            .map(|s| s.unwrap_or(f64::NAN))
            .collect();
        copy_scores(&scores, out_slice(out, n, "out")?)
    })
}

/// Kernel density scores of `n × dim` row-major points with bandwidth `h`.
/// Any of the three outputs may be null to skip it.
///
/// # Safety
/// `points` must hold `n * dim` values, `labels` `n`, each non-null output `n`.
#[no_mangle]
pub unsafe extern "C" fn cs_kernel_scores(
    points: *const f64,
    labels: *const u32,
    n: usize,
    dim: usize,
    bandwidth: f64,
    plain: *mut f64,
    same_class: *mut f64,
    signed: *mut f64,
) -> CsStatus {
    guard(|| {
        let len = n.checked_mul(dim).ok_or_else(|| invalid("n * dim overflows"))?;
        let data = in_slice(points, len, "points")?.to_vec();
        let labels = in_slice(labels, n, "labels")?.iter().map(|&y| y as usize).collect();
        let ks = kernel_scores(&PointSet::new(data, dim, labels, Space::Input)?, bandwidth)?;
        for (dst, src) in [(plain, &ks.plain), (same_class, &ks.same_class), (signed, &ks.signed)] {
            if !dst.is_null() {
                copy_scores(src, out_slice(dst, n, "out")?)?;
            }
        }
        Ok(())
    })
}

/// Local outlier factor of `n × dim` row-major points.
///
/// # Safety
/// `points` must hold `n * dim` values and `out` `n`.
#[no_mangle]
pub unsafe extern "C" fn cs_lof(points: *const f64, n: usize, dim: usize, k_neighbors: usize, out: *mut f64) -> CsStatus {
    guard(|| {
        let len = n.checked_mul(dim).ok_or_else(|| invalid("n * dim overflows"))?;
        let data = in_slice(points, len, "points")?.to_vec();
        let p = PointSet::new(data, dim, vec![0; n], Space::Input)?;
        copy_scores(&cscore::proxies::lof_values(&p, k_neighbors)?, out_slice(out, n, "out")?)
    })
}

/// Spearman ρ (`kendall = false`) or Kendall τ-b (`kendall = true`) over the
/// pairs where neither side is NaN.
///
/// # Safety
/// `a` and `b` must hold `n` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_rank_correlation(a: *const f64, b: *const f64, n: usize, kendall: bool, out: *mut f64) -> CsStatus {
    guard(|| {
        let a = in_slice(a, n, "a")?;
        let b = in_slice(b, n, "b")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let c = if kendall {
            cscore::analysis::kendall(a, b)?
        } else {
            cscore::analysis::spearman(a, b)?
        };
        *out = c.value;
        Ok(())
    })
}

/// One proxy score per example of `d`, oriented so that higher means more
/// consistent. `kind` is a proxy name such as `"C_L"` or `"cum_pL"`.
/// Geometric proxies use input space; learning-speed proxies and forgetting
/// train the configured proxy model on all of `d`.
///
/// # Safety
/// `cfg` and `d` must be live handles, `kind` NUL-terminated, `out` hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn cs_proxy(cfg: *const CsConfig, d: *const CsDataset, kind: *const c_char, out: *mut f64, len: usize) -> CsStatus {
    guard(|| {
        let cfg = &handle(cfg, "config")?.0;
        let d = &handle(d, "dataset")?.0;
        let kind: ProxyKind = str_arg(kind, "kind")?.parse()?;
        let scores = match kind {
            ProxyKind::CPlain | ProxyKind::CL | ProxyKind::CPmL => {
                let points = PointSet::from_dataset(d);
                let h = rbf_bandwidth(&points, cfg.proxy.bandwidth_cap, cfg.stage_seed("bandwidth"))?;
                kernel_scores(&points, h)?.proxy(kind, Space::Input).expect("kernel kind")
            }
            ProxyKind::CLof => lof_scores(&PointSet::from_dataset(d), cfg.proxy.k_neighbors)?,
            _ => {
                let all: Vec<usize> = (0..d.len()).collect();
                let (_, trace) = cfg.proxy_trainer().fit(d, &all, cfg.stage_seed("proxy"), None)?;
                match SpeedStatistic::from_kind(kind) {
                    Some(stat) => learning_speed_scores(&trace, stat, cfg.proxy.up_to_epoch.unwrap_or(trace.num_epochs()))?,
                    None => forgetting_counts(&trace)?,
                }
            }
        };
        copy_scores(&scores.dense(d.len()), out_slice(out, len, "out")?)
    })
}
