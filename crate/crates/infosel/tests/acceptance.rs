//! One PASS/FAIL line per acceptance criterion. Run with
//! `cargo test -p infosel --test acceptance -- --nocapture` to see them.

use std::io::Write;
use std::path::Path;

use infosel::config::{DataSource, RunConfig};
use infosel::pipeline::{run_pipeline, MetricsFile, RunManifest};
use infosel::verify::verify_run;
use infosel_core::bayesopt::{gp_fit, matern52, minimize, BoConfig, HyperGrid, SearchSpace};
use infosel_core::classifier::{Architecture, Model};
use infosel_core::dataset::{FeatureShape, Label};
use infosel_core::entropy::prediction_entropy;
use infosel_core::rng::rng_from_seed;
use infosel_core::stats::{
    balanced_accuracy_from_rates, clopper_pearson, compare_recall, f_score_from_rates, Interval,
};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let ext = compare_recall(
        0.2589,
        Interval { lower: 0.2255, upper: 0.2923 },
        0.3185,
        Interval { lower: 0.2830, upper: 0.3540 },
    )
    .map_err(|e| e.to_string())?;
    let red = compare_recall(
        0.6675,
        Interval { lower: 0.6625, upper: 0.6725 },
        0.7300,
        Interval { lower: 0.7253, upper: 0.7347 },
    )
    .map_err(|e| e.to_string())?;
    let ok = (ext.z - 2.3966).abs() <= 1e-3 && (ext.p - 0.0165).abs() <= 5e-4 && (red.z - 17.8514).abs() <= 1e-2;
    ensure(ok, format!("external Z={:.4} p={:.4}; redundant Z={:.4}", ext.z, ext.p, red.z))
}

fn criterion_2() -> Outcome {
    let ba = balanced_accuracy_from_rates(0.6597, 0.7668);
    let f = f_score_from_rates(0.7077, 0.6597);
    ensure((ba - 0.7132).abs() <= 5e-4 && (f - 0.6829).abs() <= 5e-4, format!("BA={ba:.4} F={f:.4}"))
}

// 0.6931 is the published four-digit value, checked as printed.
#[allow(clippy::approx_constant)]
fn criterion_3() -> Outcome {
    let h = |p: &[f64]| prediction_entropy(p).map_err(|e| e.to_string());
    let half = h(&[0.5, 0.5])?;
    if (half - 0.6931).abs() > 1e-4 || h(&[1.0, 0.0])? != 0.0 || h(&[0.0, 1.0])? != 0.0 {
        return Err(format!("H(0.5,0.5)={half}"));
    }
    let ln2 = std::f64::consts::LN_2;
    for i in 0..=1000 {
        let p = i as f64 / 1000.0;
        let (a, b) = (h(&[p, 1.0 - p])?, h(&[1.0 - p, p])?);
        if !(0.0..=ln2).contains(&a) || a != b {
            return Err(format!("p={p}: {a} / {b}"));
        }
    }
    Ok(format!("H(0.5,0.5)={half:.6}; 1001-point grid within [0, ln 2] and symmetric"))
}

/// P(X >= k) for X ~ Bin(n, p) by pmf recursion.
fn upper_tail(k: u64, n: u64, p: f64) -> f64 {
    let mut pmf = (1.0 - p).powi(n as i32);
    let mut tail = if k == 0 { pmf } else { 0.0 };
    for i in 1..=n {
        pmf *= (n - i + 1) as f64 / i as f64 * p / (1.0 - p);
        if i >= k {
            tail += pmf;
        }
    }
    tail
}

fn bisect(mut lo: f64, mut hi: f64, low_side: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if low_side(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_4() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 1..=50u64 {
        for k in 0..=n {
            let ci = clopper_pearson(k, n, 0.05).map_err(|e| e.to_string())?;
            let lo = if k == 0 { 0.0 } else { bisect(0.0, 1.0, |p| upper_tail(k, n, p) < 0.025) };
            let hi = if k == n { 1.0 } else { bisect(0.0, 1.0, |p| 1.0 - upper_tail(k + 1, n, p) > 0.025) };
            worst = worst.max((ci.lower - lo).abs()).max((ci.upper - hi).abs());
        }
    }
    if worst > 1e-8 {
        return Err(format!("max deviation from the oracle {worst:e}"));
    }
    let mut rng = rng_from_seed(4);
    let mut lowest: f64 = 1.0;
    for p in [0.1, 0.5, 0.9] {
        for n in [20u64, 100] {
            let cis: Vec<Interval> = (0..=n).map(|k| clopper_pearson(k, n, 0.05).unwrap()).collect();
            let hits =
                (0..10_000).filter(|_| cis[(0..n).filter(|_| rng.random::<f64>() < p).count()].contains(p)).count();
            lowest = lowest.min(hits as f64 / 10_000.0);
        }
    }
    ensure(lowest >= 0.95, format!("max oracle deviation {worst:.1e}; lowest coverage {lowest:.4}"))
}

fn criterion_5() -> Outcome {
    const STEP: f64 = 1e-5;
    let mut rng = rng_from_seed(5);
    let mut worst: f64 = 0.0;
    let cases = 21;
    for i in 0..cases {
        let (arch, shape) = match i % 3 {
            0 => (Architecture::Linear, FeatureShape::Vector { dim: rng.random_range(1..6) }),
            1 => (
                Architecture::Hidden { width: rng.random_range(1..6) },
                FeatureShape::Vector { dim: rng.random_range(1..6) },
            ),
            _ => (
                Architecture::Conv { filters: 2, kernel: 3 },
                FeatureShape::Grid { height: 3, width: rng.random_range(2..5) },
            ),
        };
        let model = Model::init(arch, shape, 100 + i).map_err(|e| e.to_string())?;
        let n = rng.random_range(1..6);
        let xs: Vec<Vec<f64>> =
            (0..n).map(|_| (0..shape.len()).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys: Vec<Label> =
            (0..n).map(|_| if rng.random::<bool>() { Label::Abnormal } else { Label::NoFinding }).collect();
        let (_, grad) = model.loss_and_grad(&xs, &ys, false).map_err(|e| e.to_string())?;
        for (ti, tensor) in grad.tensors().iter().enumerate() {
            for (pi, &a) in tensor.iter().enumerate() {
                let mut plus = model.clone();
                plus.tensors_mut()[ti][pi] += STEP;
                let mut minus = model.clone();
                minus.tensors_mut()[ti][pi] -= STEP;
                let numeric = (plus.mean_loss(&xs, &ys).unwrap() - minus.mean_loss(&xs, &ys).unwrap()) / (2.0 * STEP);
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
            }
        }
    }
    ensure(worst <= 1e-4, format!("{cases} models; worst relative error {worst:.2e}"))
}

fn criterion_6() -> Outcome {
    let space = SearchSpace { lower: 0.5, upper: 0.9 };
    let hits = (0..100)
        .filter(|&seed| {
            let cfg = BoConfig { total_calls: 50, random_starts: 15, seed, ..Default::default() };
            let trace = minimize(|x| Ok::<_, ()>((x - 0.7) * (x - 0.7)), &space, &cfg).unwrap();
            (trace.best_x - 0.7).abs() <= 0.02
        })
        .count();

    // Posterior against explicit inversion of the kernel matrix.
    let mut rng = rng_from_seed(6);
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let n = rng.random_range(2..7);
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gp = gp_fit(&xs, &ys, &HyperGrid::default()).map_err(|e| e.to_string())?;
        let h = gp.hyper;
        let k: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let diag = if i == j { h.noise_variance + gp.jitter } else { 0.0 };
                        matern52(xs[i] - xs[j], h.length_scale, h.signal_variance) + diag
                    })
                    .collect()
            })
            .collect();
        let kinv = invert(&k);
        let z: Vec<f64> = ys.iter().map(|y| gp.standardize(*y)).collect();
        for t in 0..=10 {
            let x = t as f64 / 10.0;
            let ks: Vec<f64> = xs.iter().map(|p| matern52(x - p, h.length_scale, h.signal_variance)).collect();
            let w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| kinv[i][j] * ks[j]).sum()).collect();
            let mean: f64 = w.iter().zip(&z).map(|(a, b)| a * b).sum();
            let var = (h.signal_variance - w.iter().zip(&ks).map(|(a, b)| a * b).sum::<f64>()).max(0.0);
            let (m, v) = gp.posterior_standardized(x);
            worst = worst.max((m - mean).abs()).max((v - var).abs());
        }
    }
    ensure(hits >= 95 && worst <= 1e-8, format!("{hits}/100 seeds within 0.02; posterior deviation {worst:.1e}"))
}

/// Gauss–Jordan inverse with partial pivoting.
fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().copied().chain((0..n).map(|j| if i == j { 1.0 } else { 0.0 })).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        m[col].iter_mut().for_each(|v| *v /= p);
        let pivot_row = m[col].clone();
        for (row, r) in m.iter_mut().enumerate() {
            if row != col {
                let f = r[col];
                r.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

struct RunResult {
    seed: u64,
    manifest: RunManifest,
    metrics: MetricsFile,
    manifest_bytes: Vec<u8>,
    dir: tempfile::TempDir,
}

fn redundancy_config(seed: u64) -> RunConfig {
    let cfg = RunConfig { seed, ..Default::default() };
    match &cfg.data {
        DataSource::Synthetic { internal, .. } => assert_eq!(internal.duplicate_fraction, 0.6),
        DataSource::Csv { .. } => unreachable!(),
    }
    cfg
}

fn run(seed: u64) -> Result<RunResult, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = run_pipeline(&redundancy_config(seed), dir.path()).map_err(|e| e.to_string())?;
    let read = |p: &Path| std::fs::read(p).map_err(|e| e.to_string());
    let metrics =
        serde_json::from_slice(&read(&dir.path().join("reports/metrics.json"))?).map_err(|e| e.to_string())?;
    let manifest_bytes = read(&dir.path().join("manifest.json"))?;
    Ok(RunResult { seed, manifest, metrics, manifest_bytes, dir })
}

fn recall(m: &MetricsFile, test: &str, model: &str) -> f64 {
    m.evaluations.iter().find(|e| e.test == test && e.model == model).map_or(f64::NAN, |e| e.report.recall)
}

fn criterion_7(runs: &[RunResult]) -> Outcome {
    let mut wins = 0;
    let mut ties = 0;
    let mut problems = Vec::new();
    let mut ips = Vec::new();
    for r in runs {
        let (b, e) = (recall(&r.metrics, "internal_test", "baseline"), recall(&r.metrics, "internal_test", "entropy"));
        if e >= b {
            wins += 1;
        }
        if e == b {
            ties += 1;
        }
        let ip = r.manifest.informative_proportion.unwrap_or(f64::NAN);
        ips.push(format!("{ip:.3}"));
        if !(0.5..=0.9).contains(&ip) {
            problems.push(format!("seed {}: IP {ip}", r.seed));
        }
        match &r.metrics.entropy_gap {
            Some(g) if g.comparison.z > 0.0 && g.informative.mean > g.redundant.mean => {}
            other => problems.push(format!("seed {}: entropy gap {other:?}", r.seed)),
        }
    }
    let detail = format!(
        "entropy recall >= baseline in {wins}/{} seeds ({ties} exact ties); IP [{}]{}",
        runs.len(),
        ips.join(", "),
        if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
    );
    ensure(wins >= 7 && problems.is_empty() && runs.len() == 10, detail)
}

fn criterion_8(first: &RunResult) -> Outcome {
    let again = run(first.seed)?;
    ensure(
        again.manifest_bytes == first.manifest_bytes,
        format!("seed {}: manifests of {} bytes, identical", first.seed, first.manifest_bytes.len()),
    )
}

fn criterion_9(runs: &[RunResult]) -> Outcome {
    let mut failures = Vec::new();
    let mut checks = 0;
    for r in runs {
        for c in verify_run(r.dir.path()).map_err(|e| e.to_string())? {
            checks += 1;
            if !c.passed {
                failures.push(format!("seed {} {}: {}", r.seed, c.name, c.detail));
            }
        }
    }
    ensure(failures.is_empty(), format!("{checks} checks over {} runs {}", runs.len(), failures.join("; ")))
}

/// Writes to the stdout handle rather than `println!`, which the test harness
/// captures, so the verdicts show up in a plain `cargo test` log.
fn report(id: usize, title: &str, outcome: &Outcome) -> bool {
    let line = match outcome {
        Ok(detail) => format!("criterion {id}: PASS - {title}: {detail}\n"),
        Err(detail) => format!("criterion {id}: FAIL - {title}: {detail}\n"),
    };
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).and_then(|_| out.flush()).expect("stdout");
    outcome.is_ok()
}

#[test]
fn acceptance() {
    let mut passed = vec![
        report(1, "recall Z tests on the published table rows", &criterion_1()),
        report(2, "balanced accuracy and F from published rates", &criterion_2()),
        report(3, "entropy calibration", &criterion_3()),
        report(4, "Clopper-Pearson oracle and coverage", &criterion_4()),
        report(5, "gradient checks", &criterion_5()),
        report(6, "optimizer convergence and GP oracle", &criterion_6()),
    ];

    let runs: Result<Vec<RunResult>, String> = (0..10).map(run).collect();
    match runs {
        Ok(runs) => {
            passed.push(report(7, "end-to-end redundancy experiment, 10 seeds", &criterion_7(&runs)));
            passed.push(report(8, "byte-identical manifests on rerun", &criterion_8(&runs[0])));
            passed.push(report(9, "partition, leakage and provenance invariants", &criterion_9(&runs)));
        }
        Err(e) => {
            for (id, title) in [(7, "end-to-end redundancy experiment"), (8, "determinism"), (9, "invariants")] {
                passed.push(report(id, title, &Err(format!("pipeline run failed: {e}"))));
            }
        }
    }
    let failed: Vec<usize> = passed.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
