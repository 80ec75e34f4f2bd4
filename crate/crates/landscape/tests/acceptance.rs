//! Acceptance suite: one `PASS`/`FAIL`/`SKIP` line per criterion.
//!
//! Criteria 1-5, 9 and 10 are exact oracles and fail the target when they
//! fail. Criteria 6-8 reproduce experimental trends; their verdicts are
//! printed with the measured numbers and only fail the target when
//! `LANDSCAPE_STRICT_ACCEPTANCE` is set. Criterion 8 needs the MNIST IDX files
//! (see `configs/mnist_parity.toml`, or point `LANDSCAPE_MNIST_DIR` at them).

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use landscape::config::{Algorithm, ExperimentConfig};
use landscape::experiment::{family, run_experiment, RunSummary};
use landscape_core::data::{hmm_generate, HmmConfig};
use landscape_core::geometry::{
    geodesic_distance, hamming_distance, network_geodesic, sphere_geodesic_point, GeometryError,
};
use landscape_core::probes::{local_energy, spearman, LocalEnergyProfile, PerturbMode, SOLUTION_THRESHOLD};
use landscape_core::rng;
use landscape_core::symmetry::{align, canonical_pair, is_normalized, normalize, solve_assignment, unit_norms, CostMatrix};
use landscape_core::train::{sgd_train, Loss, TrainConfig};
use landscape_core::{Network, Task};
use ndarray::Array1;
use rand::Rng;

const ALGS: [Algorithm; 3] = [Algorithm::Adv, Algorithm::Sgd, Algorithm::Rsgd];

enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    verdict: Verdict,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn check(ok: bool, summary: impl Into<String>, details: Vec<String>) -> Self {
        Outcome {
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            summary: summary.into(),
            details,
        }
    }
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut r = rng::rng(101);
    let (mut changed, mut hidden_dev, mut last_dev) = (0usize, 0f64, 0f64);
    for k in 0..20 {
        let h = if k % 2 == 0 { 8 } else { 64 };
        let net = Network::mlp(&[20, h, h, 10], false, k % 4 < 2, &mut r).unwrap();
        let x = random_inputs(1000, 20, &mut r);
        let n = normalize(&net).unwrap();
        let before = net.predict(x.view()).unwrap();
        let after = n.predict(x.view()).unwrap();
        changed += before.iter().zip(&after).filter(|(a, b)| a != b).count();
        let norms = unit_norms(&n);
        for layer in &norms[..2] {
            for v in layer {
                hidden_dev = hidden_dev.max((v - 1.0).abs());
            }
        }
        let last = norms[2].iter().map(|v| v * v).sum::<f64>().sqrt();
        last_dev = last_dev.max((last - 10f64.sqrt()).abs());
    }
    let elapsed = t.elapsed();
    Outcome::check(
        changed == 0 && hidden_dev <= 1e-6 && last_dev <= 1e-5 && elapsed < Duration::from_secs(10),
        format!(
            "normalization: {changed} changed predictions, hidden norm dev {hidden_dev:.1e}, last-layer dev {last_dev:.1e}, {}",
            secs(elapsed)
        ),
        vec![],
    )
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mut r = rng::rng(102);
    let (mut recovered, mut worst) = (0usize, 0f64);
    for k in 0..50 {
        if k % 2 == 0 {
            let net = normalize(&Network::mlp(&[12, 16, 16, 3], false, k % 4 == 0, &mut r).unwrap()).unwrap();
            let shuffled = random_plan(&net, false, &mut r).apply(&net).unwrap();
            let al = align(&net, &shuffled).unwrap();
            let d = geodesic_distance(&net, &al.aligned).unwrap();
            worst = worst.max(d);
            if al.aligned == net && d <= 1e-6 {
                recovered += 1;
            }
        } else {
            let net = Network::mlp(&[15, 21, 21, 1], true, false, &mut r).unwrap();
            let shuffled = random_plan(&net, true, &mut r).apply(&net).unwrap();
            let al = align(&net, &shuffled).unwrap();
            let d = hamming_distance(&net, &al.aligned).unwrap() as f64;
            worst = worst.max(d);
            if d == 0.0 {
                recovered += 1;
            }
        }
    }
    let elapsed = t.elapsed();
    Outcome::check(
        recovered == 50 && elapsed < Duration::from_secs(30),
        format!(
            "alignment: {recovered}/50 copies recovered, worst post-alignment distance {worst:.1e}, {}",
            secs(elapsed)
        ),
        vec![],
    )
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let mut r = rng::rng(103);
    let mut mismatches = 0;
    for n in 2..=8 {
        for _ in 0..100 {
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| r.random_range(-10.0..10.0)).collect()).collect();
            let cost = CostMatrix::from_rows(&rows).unwrap();
            if cost.total(&solve_assignment(&cost)) != brute_force_min(&rows) {
                mismatches += 1;
            }
        }
    }
    let elapsed = t.elapsed();
    Outcome::check(
        mismatches == 0 && elapsed < Duration::from_secs(60),
        format!("assignment: {mismatches} of 700 matrices differ from brute force, {}", secs(elapsed)),
        vec![],
    )
}

fn criterion_4() -> Outcome {
    let mut r = rng::rng(104);
    let (mut endpoint, mut equi, mut additive, mut off) = (0f64, 0f64, 0f64, 0usize);
    for _ in 0..10 {
        let a = Network::mlp(&[10, 16, 12, 4], false, true, &mut r).unwrap();
        let b = Network::mlp(&[10, 16, 12, 4], false, true, &mut r).unwrap();
        let (a, b) = canonical_pair(&a, &b).unwrap();
        for (x, target) in [(0.0, &a), (1.0, &b)] {
            let p = network_geodesic(&a, &b, x).unwrap();
            for (u, v) in p.params().iter().zip(target.params()) {
                endpoint = endpoint.max((u - v).abs() as f64);
            }
        }
        let m = network_geodesic(&a, &b, 0.5).unwrap();
        let (dam, dmb, dab) = (
            geodesic_distance(&a, &m).unwrap(),
            geodesic_distance(&m, &b).unwrap(),
            geodesic_distance(&a, &b).unwrap(),
        );
        equi = equi.max((dam - dmb).abs());
        additive = additive.max((dam + dmb - dab).abs());
        for k in 0..=20 {
            let p = network_geodesic(&a, &b, k as f64 / 20.0).unwrap();
            if !is_normalized(&p, 1e-5) {
                off += 1;
            }
        }
    }
    let u = Array1::from(vec![0.0f32, 0.6, 0.8]);
    let antipodal = matches!(
        sphere_geodesic_point(u.view(), (-&u).view(), 1.0, 0.3),
        Err(GeometryError::Antipodal)
    );
    Outcome::check(
        endpoint <= 1e-6 && equi <= 1e-5 && additive <= 1e-5 && off == 0 && antipodal,
        format!(
            "geodesics: endpoint dev {endpoint:.1e}, equidistance {equi:.1e}, additivity {additive:.1e}, off-manifold points {off}, antipodal error {}",
            if antipodal { "raised" } else { "missing" }
        ),
        vec![],
    )
}

fn criterion_5() -> Outcome {
    let (mut worst, mut seed, mut cases) = (0f64, 500, 0);
    for depth in 1..=3 {
        for bias in [false, true] {
            for task in [Task::Binary, Task::Classes(3)] {
                let mut widths = vec![6];
                widths.extend(std::iter::repeat_n(16, depth));
                widths.push(task.num_outputs());
                seed += 1;
                cases += 1;
                worst = worst.max(gradient_check(&widths, bias, task, seed));
            }
        }
    }
    Outcome::check(
        worst < 1e-4,
        format!("gradients: worst relative error {worst:.1e} over {cases} relu nets (1-3 hidden layers of 16)"),
        vec![],
    )
}

type Run = Result<(RunSummary, Duration, ExperimentConfig), String>;

fn run_config(name: &str) -> Run {
    let cfg = ExperimentConfig::load(&repo_root().join("configs").join(name)).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t = Instant::now();
    let summary = run_experiment(&cfg, Some(dir.path())).map_err(|e| e.to_string())?;
    Ok((summary, t.elapsed(), cfg))
}

fn criterion_6(run: &Run) -> Outcome {
    let (summary, elapsed, cfg) = match run {
        Ok(r) => r,
        Err(e) => return Outcome::check(false, format!("HMM perceptron run failed: {e}"), vec![]),
    };
    let delta = cfg.delta();
    let points = &summary.points;
    let mut details = Vec::new();

    let worst_train = points
        .iter()
        .flat_map(|p| p.solutions.iter().map(|s| s.train_error))
        .fold(0.0, f64::max);
    let a = worst_train < 0.01;
    details.push(format!("(a) worst solution train error {:.4} -> {}", worst_train, ok(a)));

    let mut b = true;
    for p in points {
        let e: Vec<f64> = ALGS.iter().map(|&g| p.energy_at(g, delta).unwrap()).collect();
        let ranked = e[0] > e[1] && e[1] > e[2];
        b &= ranked;
        details.push(format!(
            "(b) N={} dE({delta}) adv {:.4} sgd {:.4} rsgd {:.4} -> {}",
            p.point.value,
            e[0],
            e[1],
            e[2],
            ok(ranked)
        ));
    }

    let mut c = true;
    for g in ALGS {
        let f = family(g);
        let means: Vec<f64> = points.iter().map(|p| p.barrier(&f, "hamming").unwrap().mean).collect();
        let monotone = means.windows(2).all(|w| w[1] <= w[0]);
        c &= monotone;
        details.push(format!("(c) {f} barriers {} non-increasing -> {}", fmt_list(&means), ok(monotone)));
    }
    let last = points.last().unwrap().barrier("rsgd-rsgd", "hamming").unwrap().mean;
    c &= last < 0.02;
    details.push(format!("(c) rsgd-rsgd barrier at N={} is {last:.4} < 0.02 -> {}", points.last().unwrap().point.value, ok(last < 0.02)));

    let energy: Vec<f64> = ALGS
        .iter()
        .map(|&g| points.iter().map(|p| p.energy_at(g, delta).unwrap()).sum::<f64>() / points.len() as f64)
        .collect();
    let test: Vec<f64> = ALGS
        .iter()
        .map(|&g| points.iter().map(|p| p.mean_test_error(g).unwrap()).sum::<f64>() / points.len() as f64)
        .collect();
    let rho = spearman(&energy, &test);
    let d = rho == 1.0;
    details.push(format!(
        "(d) adv/sgd/rsgd mean energy {} test error {} spearman {rho:+.2} -> {}",
        fmt_list(&energy),
        fmt_list(&test),
        ok(d)
    ));
    let fast = *elapsed <= Duration::from_secs(30 * 60);
    Outcome::check(
        a && b && c && d && fast,
        format!(
            "HMM perceptron: (a) {} (b) {} (c) {} (d) {}, {}",
            ok(a),
            ok(b),
            ok(c),
            ok(d),
            secs(*elapsed)
        ),
        details,
    )
}

fn criterion_7(run: &Run) -> Outcome {
    let (summary, elapsed, _) = match run {
        Ok(r) => r,
        Err(e) => return Outcome::check(false, format!("HMM committee run failed: {e}"), vec![]),
    };
    let points = &summary.points;
    let (mut below, mut decrease) = (true, true);
    let mut details = Vec::new();
    for g in ALGS {
        let f = family(g);
        let raw: Vec<f64> = points.iter().map(|p| p.barrier(&f, "hamming").unwrap().mean).collect();
        let aligned: Vec<f64> = points.iter().map(|p| p.barrier(&f, "hamming-aligned").unwrap().mean).collect();
        let b = raw.iter().zip(&aligned).all(|(r, a)| a < r);
        let d = raw.windows(2).all(|w| w[1] < w[0]) && aligned.windows(2).all(|w| w[1] < w[0]);
        below &= b;
        decrease &= d;
        details.push(format!(
            "{f}: raw {} aligned {} (aligned below raw {}, decreasing {})",
            fmt_list(&raw),
            fmt_list(&aligned),
            ok(b),
            ok(d)
        ));
    }
    let fast = *elapsed <= Duration::from_secs(60 * 60);
    Outcome::check(
        below && decrease && fast,
        format!(
            "HMM committee: aligned < raw {}, decreasing in N {}, {}",
            ok(below),
            ok(decrease),
            secs(*elapsed)
        ),
        details,
    )
}

fn criterion_8() -> Outcome {
    let mnist = std::env::var_os("LANDSCAPE_MNIST_DIR").map(PathBuf::from);
    let cfg_path = repo_root().join("configs/mnist_parity.toml");
    let mut cfg = match ExperimentConfig::load(&cfg_path) {
        Ok(c) => c,
        Err(e) => return Outcome::check(false, format!("MNIST config: {e}"), vec![]),
    };
    if let landscape::config::DataSection::Idx {
        train_images,
        train_labels,
        test_images,
        test_labels,
        ..
    } = &mut cfg.data
    {
        let mut files: Vec<&mut PathBuf> = vec![train_images, train_labels];
        files.extend(test_images.as_mut());
        files.extend(test_labels.as_mut());
        for f in files {
            if let (Some(dir), Some(name)) = (&mnist, f.file_name()) {
                *f = dir.join(name);
            }
            if !f.exists() {
                return Outcome {
                    verdict: Verdict::Skip,
                    summary: format!("binary MLP parity: MNIST file {} not found", f.display()),
                    details: vec![],
                };
            }
        }
    }
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Outcome::check(false, e.to_string(), vec![]),
    };
    let t = Instant::now();
    let summary = match run_experiment(&cfg, Some(dir.path())) {
        Ok(s) => s,
        Err(e) => return Outcome::check(false, format!("binary MLP parity run failed: {e}"), vec![]),
    };
    let elapsed = t.elapsed();
    let (mut dist, mut bars, mut opt) = (true, true, true);
    let mut details = Vec::new();
    for p in &summary.points {
        for row in p.distances.iter().filter(|r| r.group_a == r.group_b) {
            let good = row.aligned_mean <= row.raw_mean;
            dist &= good;
            details.push(format!(
                "width {} {}: Hamming raw {:.1} aligned {:.1} -> {}",
                p.point.value,
                row.group_a,
                row.raw_mean,
                row.aligned_mean,
                ok(good)
            ));
        }
        for g in ALGS {
            let f = family(g);
            let raw = p.barrier(&f, "hamming").map(|b| b.mean);
            let aligned = p.barrier(&f, "hamming-aligned").map(|b| b.mean);
            let optimized = p.barrier(&f, "hamming-aligned-optimized").map(|b| b.mean);
            match (raw, aligned, optimized) {
                (Some(r), Some(a), Some(o)) => {
                    bars &= a <= r;
                    opt &= o <= a;
                    details.push(format!(
                        "width {} {f}: barriers raw {r:.4} aligned {a:.4} optimized {o:.4}",
                        p.point.value
                    ));
                }
                _ => {
                    bars = false;
                    details.push(format!("width {} {f}: missing barrier statistics", p.point.value));
                }
            }
        }
    }
    let fast = elapsed <= Duration::from_secs(45 * 60);
    Outcome::check(
        dist && bars && opt && fast,
        format!(
            "binary MLP parity: distances {} barriers {} optimized {}, {}",
            ok(dist),
            ok(bars),
            ok(opt),
            secs(elapsed)
        ),
        details,
    )
}

fn continuous_profile() -> LocalEnergyProfile {
    let h = hmm_generate(&HmmConfig {
        latent_dim: 40,
        input_dim: 201,
        train_size: 80,
        test_size: 10,
        seed: 109,
    })
    .unwrap();
    let net = Network::mlp(&[201, 16, 1], false, true, &mut rng::rng(110)).unwrap();
    let cfg = TrainConfig {
        epochs: 60,
        batch_size: 16,
        lr0: 0.05,
        loss: Loss::BinaryCrossEntropy,
        ..TrainConfig::continuous_default(111)
    };
    let (net, _) = sgd_train(&net, &h.train, None, &cfg).unwrap();
    let mode = PerturbMode::Multiplicative;
    local_energy(&net, &h.train, &mode.default_amplitudes(), mode.default_samples(), mode, 112).unwrap()
}

fn criterion_9(runs: &[&Run]) -> Outcome {
    let mut profiles = vec![continuous_profile()];
    for (summary, _, _) in runs.iter().filter_map(|r| r.as_ref().ok()) {
        for p in &summary.points {
            profiles.extend(p.energy.iter().map(|(_, _, prof)| prof.clone()));
        }
    }
    // Local energy describes the neighbourhood of a solution; profiles of
    // runs that did not reach one (criterion 6 reds) only enter the δE(0)
    // check.
    let (mut zero, mut monotone, mut checked) = (true, true, 0usize);
    let mut modes = std::collections::BTreeSet::new();
    for p in &profiles {
        for (k, &a) in p.amplitudes.iter().enumerate() {
            if a == 0.0 && (p.mean[k] != 0.0 || p.std[k] != 0.0) {
                zero = false;
            }
        }
        if p.base_error >= SOLUTION_THRESHOLD {
            continue;
        }
        checked += 1;
        modes.insert(format!("{:?}", p.mode));
        for k in 1..p.amplitudes.len() {
            if p.mean[k] + p.std[k] < p.mean[k - 1] {
                monotone = false;
            }
        }
    }
    let both = modes.len() == 2;
    Outcome::check(
        zero && monotone && both,
        format!(
            "local energy: dE(0)=0 on all {} profiles {}, non-decreasing within 1 std on {checked} solution profiles ({}) {}",
            profiles.len(),
            ok(zero),
            modes.into_iter().collect::<Vec<_>>().join(", "),
            ok(monotone)
        ),
        vec![],
    )
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".csv"))
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    out.sort();
    out
}

fn criterion_10() -> Outcome {
    let cfg = match ExperimentConfig::load(&repo_root().join("configs/smoke.toml")) {
        Ok(c) => c,
        Err(e) => return Outcome::check(false, format!("smoke config: {e}"), vec![]),
    };
    let (one, two) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&one, &two] {
        if let Err(e) = run_experiment(&cfg, Some(d.path())) {
            return Outcome::check(false, format!("smoke run failed: {e}"), vec![]);
        }
    }
    let (a, b) = (csv_bytes(one.path()), csv_bytes(two.path()));
    let same = !a.is_empty() && a == b;
    Outcome::check(
        same,
        format!(
            "determinism: {} CSV files from two runs with seed {} are {}",
            a.len(),
            cfg.seed,
            if same { "byte-identical" } else { "different" }
        ),
        vec![],
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "NO"
    }
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", items.join(", "))
}

fn report(n: usize, o: &Outcome, oracle: bool, strict: bool, failed: &mut bool) {
    let tag = match o.verdict {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::Skip => "SKIP",
    };
    println!("{tag} criterion {n}: {}", o.summary);
    for d in &o.details {
        println!("    {d}");
    }
    if matches!(o.verdict, Verdict::Fail) && (oracle || strict) {
        *failed = true;
    }
}

fn main() {
    // `cargo test -- --list` and filters other than "acceptance" skip the suite.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if let Some(filter) = args.iter().find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(filter.as_str()) {
            return;
        }
    }
    let strict = std::env::var_os("LANDSCAPE_STRICT_ACCEPTANCE").is_some();
    let mut failed = false;
    report(1, &criterion_1(), true, strict, &mut failed);
    report(2, &criterion_2(), true, strict, &mut failed);
    report(3, &criterion_3(), true, strict, &mut failed);
    report(4, &criterion_4(), true, strict, &mut failed);
    report(5, &criterion_5(), true, strict, &mut failed);
    let perceptron = run_config("hmm_perceptron.toml");
    report(6, &criterion_6(&perceptron), false, strict, &mut failed);
    let committee = run_config("hmm_committee.toml");
    report(7, &criterion_7(&committee), false, strict, &mut failed);
    report(8, &criterion_8(), false, strict, &mut failed);
    report(9, &criterion_9(&[&perceptron, &committee]), true, strict, &mut failed);
    report(10, &criterion_10(), true, strict, &mut failed);
    if failed {
        std::process::exit(1);
    }
}
