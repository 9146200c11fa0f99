//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! `CSCORE_RECORD_ORACLE=1` rewrites `tests/fixtures/benchmark_oracle.json`
//! from the current run instead of comparing against it.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use cscore::analysis::{detection_rate, kendall, spearman};
use cscore::cli::{estimate_in_memory, sha256_file};
use cscore::config::RunConfig;
use cscore::dataset::{parse_idx, Dataset, DENSE_MIN_COUNT, SPARSE_MAX_COUNT};
use cscore::estimator::{
    aggregate_scores, export_scores, integral_cscore, point_estimate_curve, run_holdout, sensitivity_curve, LossMatrix,
    MaskMatrix, ScoreTable,
};
use cscore::learner::{init_model, ArchSpec, OptimizerConfig, ScheduleSpec, TrainerConfig};
use cscore::proxies::{kernel_scores, learning_speed_scores, lof_values, write_proxy_csv, PointSet, ProxyScores, Space, SpeedStatistic};
use cscore::{seed, Error};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(budget: Duration, t: Instant) -> Result<(), String> {
    ensure(t.elapsed() < budget, || {
        format!("took {:.2}s, budget {:.0}s", t.elapsed().as_secs_f64(), budget.as_secs_f64())
    })
}

fn holdout_oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let mut rng = common::rng(101);
    for case in 0..1000 {
        let k = rng.random_range(1..=8);
        let n = rng.random_range(1..=12);
        let (mask, loss) = common::random_mask_loss(&mut rng, k, n);
        let got = aggregate_scores(
            &MaskMatrix::from_rows(mask.clone()).map_err(|e| e.to_string())?,
            &LossMatrix::from_rows(loss.clone()).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let want = common::holdout_oracle(&mask, &loss);
        ensure(got == want, || format!("case {case}: {got:?} != {want:?}"))?;
    }
    within(Duration::from_secs(1), t)?;
    Ok(format!("1000 cases in {:.3}s", t.elapsed().as_secs_f64()))
}

fn kernel_identity() -> Outcome {
    let t = Instant::now();
    let mut rng = common::rng(202);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let n = rng.random_range(1..=200);
        let dim = rng.random_range(1..=16);
        let classes = rng.random_range(1..=4);
        let data: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let h = rng.random_range(0.2..4.0);
        let p = PointSet::new(data, dim, labels, Space::Input).map_err(|e| e.to_string())?;
        let ks = kernel_scores(&p, h).map_err(|e| e.to_string())?;
        for j in 0..n {
            let (c, l, s) = (ks.plain[j], ks.same_class[j], ks.signed[j]);
            let err = (s - (2.0 * l - c)).abs();
            worst = worst.max(err);
            ensure(err <= 1e-9, || format!("case {case} point {j}: identity off by {err:e}"))?;
            ensure((0.0..=c).contains(&l) && c <= 1.0, || {
                format!("case {case} point {j}: bounds violated ({l}, {c})")
            })?;
        }
    }
    within(Duration::from_secs(5), t)?;
    Ok(format!("max identity error {worst:.1e}, {:.2}s", t.elapsed().as_secs_f64()))
}

fn lof_oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let mut rng = common::rng(303);
    for case in 0..200 {
        let k = rng.random_range(1..=4);
        let n = rng.random_range(k + 1..=15);
        let dim = rng.random_range(1..=3);
        let points = common::grid_points(&mut rng, n, dim, 3);
        let p = PointSet::new(common::flatten(&points), dim, vec![0; n], Space::Input).map_err(|e| e.to_string())?;
        let got = lof_values(&p, k).map_err(|e| e.to_string())?;
        let want = common::lof_oracle(&points, k);
        let same = got.iter().zip(&want).all(|(a, b)| a == b || (a.is_nan() && b.is_nan()));
        ensure(same, || format!("case {case} (k={k}): {got:?} != {want:?}"))?;
    }
    within(Duration::from_secs(10), t)?;
    Ok(format!("200 cases in {:.3}s", t.elapsed().as_secs_f64()))
}

fn rank_fixtures() -> Outcome {
    let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).map_err(|e| e.to_string())?.value;
    ensure(rho == 0.8, || format!("rho = {rho}"))?;
    let tau = kendall(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).map_err(|e| e.to_string())?.value;
    ensure(tau == 1.0 / 3.0, || format!("tau = {tau}"))?;
    let mut rng = common::rng(404);
    for case in 0..100 {
        let n = rng.random_range(3..=50);
        let x: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..6))).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..6))).collect();
        let want = common::kendall_oracle(&x, &y);
        match kendall(&x, &y) {
            Ok(c) => ensure(c.value == want, || format!("case {case}: {} != {want}", c.value))?,
            // a constant vector leaves τ-b undefined
            Err(_) => ensure(want.is_nan(), || format!("case {case}: rejected, oracle {want}"))?,
        }
    }
    Ok(format!("rho {rho}, tau {tau:.6}, 100 tied vectors"))
}

fn nudge(model: &mut cscore::learner::Model, l: usize, w: Option<(usize, usize)>, c: usize, delta: f64) {
    let layer = &mut model.layers_mut()[l];
    match w {
        Some(rc) => layer.weights[rc] += delta,
        None => layer.bias[c] += delta,
    }
}

fn gradient_check() -> Outcome {
    let arch = ArchSpec::new(3, vec![4], 3).map_err(|e| e.to_string())?;
    let mut model = init_model(&arch, 7).map_err(|e| e.to_string())?;
    let mut rng = common::rng(505);
    let x = Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.5..1.5));
    let labels: Vec<usize> = (0..6).map(|i| i % 3).collect();
    let (_, grads) = model.loss_and_gradients(x.view(), &labels);
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for l in 0..grads.len() {
        let (rows, cols) = grads[l].weights.dim();
        let params = (0..rows * cols).map(|p| (Some((p / cols, p % cols)), p)).chain((0..cols).map(|c| (None, c)));
        for (w, c) in params {
            let analytic = match w {
                Some(rc) => grads[l].weights[rc],
                None => grads[l].bias[c],
            };
            nudge(&mut model, l, w, c, eps);
            let up = model.loss_and_gradients(x.view(), &labels).0;
            nudge(&mut model, l, w, c, -2.0 * eps);
            let down = model.loss_and_gradients(x.view(), &labels).0;
            nudge(&mut model, l, w, c, eps);
            let numeric = (up - down) / (2.0 * eps);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:e}"))?;

    let d = Dataset::from_examples(
        &(0..40)
            .map(|i| {
                let y = i % 2;
                (vec![y as f32 + 0.1 * (i % 7) as f32, 1.0 - y as f32 - 0.05 * (i % 5) as f32], y)
            })
            .collect::<Vec<_>>(),
        2,
    )
    .map_err(|e| e.to_string())?;
    let trainer = TrainerConfig {
        hidden: vec![8],
        optimizer: OptimizerConfig::sgd(0.1, 8, 5),
        schedule: ScheduleSpec::triangular_15(),
    };
    let all: Vec<usize> = (0..d.len()).collect();
    let a = trainer.fit(&d, &all, 9, None).map_err(|e| e.to_string())?;
    let b = trainer.fit(&d, &all, 9, None).map_err(|e| e.to_string())?;
    ensure(a.1 == b.1, || "retrained traces differ".into())?;
    ensure(a.0.layers() == b.0.layers(), || "retrained weights differ".into())?;
    Ok(format!("max relative error {worst:.1e}, retrain identical"))
}

fn idx_fixtures() -> Outcome {
    let read = |name: &str| std::fs::read(common::fixture(name)).map_err(|e| format!("{name}: {e}"));
    let images = parse_idx(&read("four-images.idx3-ubyte")?).map_err(|e| e.to_string())?;
    let labels = parse_idx(&read("four-labels.idx1-ubyte")?).map_err(|e| e.to_string())?;
    let pixels: Vec<u8> = (0..16u8)
        .map(|i| i * 17)
        .chain([1, 2, 3, 5, 8, 13, 21, 34])
        .collect();
    ensure(images.dims == [4, 2, 3] && images.data == pixels, || format!("images: {images:?}"))?;
    ensure(labels.dims == [4] && labels.data == [3, 0, 2, 1], || format!("labels: {labels:?}"))?;
    match parse_idx(&read("truncated-images.idx3-ubyte")?) {
        Err(Error::Idx { offset: 38, message }) if message.contains("truncated") => {}
        other => return Err(format!("truncated fixture: {other:?}")),
    }
    match parse_idx(&read("bad-magic-labels.idx1-ubyte")?) {
        Err(Error::Idx { offset: 0, message }) if message.contains("bad magic") => {}
        other => return Err(format!("bad-magic fixture: {other:?}")),
    }
    Ok("4 images, 4 labels, 2 rejections".into())
}

/// Everything measured on one benchmark dataset.
struct Bench {
    dataset: Dataset,
    table: ScoreTable,
    point_curve: Vec<(f64, Option<f64>)>,
    cum_pl: ProxyScores,
    cum_acc: ProxyScores,
    estimate_secs: f64,
}

fn speed_proxies(cfg: &RunConfig, d: &Dataset) -> Result<(ProxyScores, ProxyScores), String> {
    let all: Vec<usize> = (0..d.len()).collect();
    let (_, trace) = cfg
        .proxy_trainer()
        .fit(d, &all, cfg.stage_seed("proxy"), None)
        .map_err(|e| e.to_string())?;
    let up_to = cfg.proxy.up_to_epoch.unwrap_or(trace.num_epochs());
    let pl = learning_speed_scores(&trace, SpeedStatistic::ProbCorrect, up_to).map_err(|e| e.to_string())?;
    let acc = learning_speed_scores(&trace, SpeedStatistic::Accuracy, up_to).map_err(|e| e.to_string())?;
    Ok((pl, acc))
}

fn run_benchmark(cfg: &RunConfig) -> Result<Bench, String> {
    let d = cfg.load_dataset(true).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let est = &cfg.estimator;
    let profile = estimate_in_memory(&d, &est.ratios, est.runs_per_ratio, &est.trainer, cfg.stage_seed("estimator"))
        .map_err(|e| e.to_string())?;
    let table = integral_cscore(&profile, d.labels()).map_err(|e| e.to_string())?;
    let point_curve = point_estimate_curve(&profile, &table).map_err(|e| e.to_string())?;
    let estimate_secs = t.elapsed().as_secs_f64();
    let (cum_pl, cum_acc) = speed_proxies(cfg, &d)?;
    Ok(Bench {
        dataset: d,
        table,
        point_curve,
        cum_pl,
        cum_acc,
        estimate_secs,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct Oracle {
    dense: f64,
    sparse: f64,
    flipped: f64,
    rho_cum_pl: f64,
    detection_cum_pl: f64,
    detection_cum_acc: f64,
    point_curve: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean score over unflipped members of dense modes, unflipped members of
/// sparse modes, and flipped examples.
fn group_means(b: &Bench) -> Result<(f64, f64, f64), String> {
    let modes = b.dataset.modes().ok_or("benchmark dataset has no mode ids")?;
    let flipped = b.dataset.corruption_mask().ok_or("benchmark dataset has no corruption mask")?;
    let mut counts = vec![0usize; modes.iter().max().map_or(0, |m| m + 1)];
    for &m in modes {
        counts[m] += 1;
    }
    let scores = b.table.scores();
    let (mut dense, mut sparse, mut bad) = (Vec::new(), Vec::new(), Vec::new());
    for (j, s) in scores.iter().enumerate() {
        let s = s.ok_or_else(|| format!("example {j} was never held out"))?;
        if flipped[j] {
            bad.push(s);
        } else if counts[modes[j]] >= DENSE_MIN_COUNT {
            dense.push(s);
        } else if counts[modes[j]] <= SPARSE_MAX_COUNT {
            sparse.push(s);
        }
    }
    ensure(!dense.is_empty() && !sparse.is_empty() && !bad.is_empty(), || "an empty group".into())?;
    Ok((mean(&dense), mean(&sparse), mean(&bad)))
}

fn rho_cum_pl(b: &Bench) -> Result<f64, String> {
    let n = b.dataset.len();
    spearman(&b.cum_pl.dense(n), &b.table.scores_nan())
        .map(|c| c.value)
        .map_err(|e| e.to_string())
}

fn oracle_path() -> std::path::PathBuf {
    common::fixture("benchmark_oracle.json")
}

fn check_oracle(now: &Oracle) -> Result<(), String> {
    let path = oracle_path();
    if std::env::var_os("CSCORE_RECORD_ORACLE").is_some() {
        let text = serde_json::to_string_pretty(now).expect("oracle serializes");
        return std::fs::write(&path, text + "\n").map_err(|e| e.to_string());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let want: Oracle = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let pairs = [
        ("dense", now.dense, want.dense),
        ("sparse", now.sparse, want.sparse),
        ("flipped", now.flipped, want.flipped),
        ("rho_cum_pl", now.rho_cum_pl, want.rho_cum_pl),
        ("detection_cum_pl", now.detection_cum_pl, want.detection_cum_pl),
        ("detection_cum_acc", now.detection_cum_acc, want.detection_cum_acc),
    ];
    for (name, a, b) in pairs {
        ensure((a - b).abs() <= 1e-9, || format!("{name} = {a}, recorded {b}"))?;
    }
    ensure(now.point_curve.len() == want.point_curve.len(), || "point curve length changed".into())?;
    for (a, b) in now.point_curve.iter().zip(&want.point_curve) {
        ensure((a - b).abs() <= 1e-9, || format!("point curve {a}, recorded {b}"))?;
    }
    Ok(())
}

fn hashes(dir: &Path, b: &Bench, tag: &str) -> Result<Vec<String>, String> {
    let scores = dir.join(format!("{tag}.scores.csv"));
    export_scores(&b.table, &scores).map_err(|e| e.to_string())?;
    let mut out = vec![sha256_file(&scores).map_err(|e| e.to_string())?];
    for p in [&b.cum_pl, &b.cum_acc] {
        let path = dir.join(format!("{tag}.{}.csv", p.kind.name()));
        write_proxy_csv(p, &path).map_err(|e| e.to_string())?;
        out.push(sha256_file(&path).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn check(&mut self, id: usize, name: &str, f: impl FnOnce() -> Outcome) {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                self.failures += 1;
                println!("FAIL {id:>2} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
}

fn main() -> ExitCode {
    let mut suite = Suite { failures: 0 };
    suite.check(1, "holdout aggregation matches brute force", holdout_oracle_equivalence);
    suite.check(2, "kernel density identity and bounds", kernel_identity);
    suite.check(3, "LOF matches brute force", lof_oracle_equivalence);
    suite.check(4, "rank correlation fixtures", rank_fixtures);
    suite.check(5, "gradient check and deterministic retrain", gradient_check);

    let cfg = RunConfig::load(&common::benchmark_config(), &[]);
    let noisy = RunConfig::load(&common::benchmark_config(), &["dataset.flip_fraction=0.25".to_string()]);
    let (cfg, noisy) = match (cfg, noisy) {
        (Ok(a), Ok(b)) => (a, b),
        (a, b) => {
            println!("FAIL benchmark config: {:?} {:?}", a.err(), b.err());
            return ExitCode::FAILURE;
        }
    };

    let t = Instant::now();
    let bench = run_benchmark(&cfg);
    let bench_secs = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let noisy_bench = noisy
        .load_dataset(true)
        .map_err(|e| e.to_string())
        .and_then(|d| speed_proxies(&noisy, &d).map(|p| (d, p)));
    let noisy_secs = t.elapsed().as_secs_f64();

    suite.check(6, "planted structure orders the scores", || {
        let b = bench.as_ref().map_err(Clone::clone)?;
        let (dense, sparse, flipped) = group_means(b)?;
        ensure(dense - sparse > 0.05 && sparse - flipped > 0.05, || {
            format!("dense {dense:.3}, sparse {sparse:.3}, flipped {flipped:.3}")
        })?;
        ensure(bench_secs < 600.0, || format!("took {bench_secs:.0}s"))?;
        Ok(format!(
            "dense {dense:.3} > sparse {sparse:.3} > flipped {flipped:.3}, estimate {:.1}s",
            b.estimate_secs
        ))
    });
    suite.check(7, "cum_pL tracks the consistency score", || {
        let b = bench.as_ref().map_err(Clone::clone)?;
        let rho = rho_cum_pl(b)?;
        ensure(rho >= 0.7, || format!("rho {rho:.3}"))?;
        Ok(format!("rho {rho:.3}"))
    });
    suite.check(8, "learning-speed proxies detect flipped labels", || {
        let (d, (pl, acc)) = noisy_bench.as_ref().map_err(Clone::clone)?;
        let gamma = noisy.gamma();
        let rate = |p: &ProxyScores| detection_rate(p, d.corruption_mask(), gamma).map_err(|e| e.to_string());
        let (a, b) = (rate(pl)?, rate(acc)?);
        ensure(a >= 0.9 && b >= 0.9, || format!("cum_pL {a:.3}, cum_acc {b:.3}"))?;
        ensure(noisy_secs < 180.0, || format!("took {noisy_secs:.0}s"))?;
        Ok(format!("cum_pL {a:.3}, cum_acc {b:.3} at gamma {gamma}"))
    });
    suite.check(9, "more runs estimate the score more faithfully", || {
        let d = cfg.load_dataset(true).map_err(|e| e.to_string())?;
        let batch = run_holdout(&d, 0.5, 200, &cfg.estimator.trainer, cfg.stage_seed("sensitivity"))
            .map_err(|e| e.to_string())?;
        let (pool, reference) = batch.split_runs(100).map_err(|e| e.to_string())?;
        let reference = aggregate_scores(&reference.mask, &reference.loss).map_err(|e| e.to_string())?;
        let curve = sensitivity_curve(&pool, &[1, 4, 16, 64, 100], 10, &reference, seed::derive_named(cfg.seed, "draws"))
            .map_err(|e| e.to_string())?;
        let rhos: Vec<f64> = curve.iter().map(|p| p.mean_rho).collect();
        let inversions = rhos.windows(2).filter(|w| !(w[1] >= w[0])).count();
        let shown = rhos.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ");
        ensure(inversions <= 1 && rhos[4] > rhos[1], || format!("mean rho [{shown}]"))?;
        Ok(format!("mean rho [{shown}]"))
    });
    suite.check(10, "point estimate peaks at an interior ratio", || {
        let b = bench.as_ref().map_err(Clone::clone)?;
        let vals: Vec<f64> = b.point_curve.iter().map(|(_, r)| r.unwrap_or(f64::NEG_INFINITY)).collect();
        let best = (0..vals.len()).fold(0, |best, i| if vals[i] > vals[best] { i } else { best });
        let shown = vals.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ");
        ensure(best > 0 && best + 1 < vals.len(), || format!("argmax {best} of [{shown}]"))?;
        Ok(format!("argmax ratio {} of [{shown}]", b.point_curve[best].0))
    });
    suite.check(11, "IDX fixtures", idx_fixtures);
    suite.check(12, "benchmark reruns are bit-identical", || {
        let b = bench.as_ref().map_err(Clone::clone)?;
        let (dense, sparse, flipped) = group_means(b)?;
        let (d, (pl, acc)) = noisy_bench.as_ref().map_err(Clone::clone)?;
        let gamma = noisy.gamma();
        let now = Oracle {
            dense,
            sparse,
            flipped,
            rho_cum_pl: rho_cum_pl(b)?,
            detection_cum_pl: detection_rate(pl, d.corruption_mask(), gamma).map_err(|e| e.to_string())?,
            detection_cum_acc: detection_rate(acc, d.corruption_mask(), gamma).map_err(|e| e.to_string())?,
            point_curve: b.point_curve.iter().map(|(_, r)| r.unwrap_or(f64::NAN)).collect(),
        };
        check_oracle(&now)?;

        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let again = run_benchmark(&cfg)?;
        ensure(hashes(dir.path(), b, "first")? == hashes(dir.path(), &again, "second")?, || {
            "benchmark score or proxy CSV hashes differ".into()
        })?;
        let noisy_again = speed_proxies(&noisy, d)?;
        ensure(&noisy_again.0 == pl && &noisy_again.1 == acc, || "flip 0.25 proxies differ".into())?;
        Ok("scores and proxies hash-equal, matches recorded oracle".into())
    });

    if suite.failures == 0 {
        println!("all 12 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("{} of 12 criteria fail", suite.failures);
        ExitCode::FAILURE
    }
}
