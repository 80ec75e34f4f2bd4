//! Experiment pipelines: train solution sets, probe them, write checkpoints,
//! CSV tables and a JSON run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use landscape_core::data::hmm_generate;
use landscape_core::probes::{
    barrier, distance_study, local_energy, mean_std, optimized_path, path_scan_with_loss, plane_scan, DistanceRow,
    LocalEnergyProfile, PathMode, PathScan, PlaneGrid, PlaneOptions, SolutionGroup,
};
use landscape_core::train::{adv_init_train, rsgd_train, sgd_train, Loss, TrainConfig};
use landscape_core::{rng, Dataset, Network};
use serde_json::{json, Value};

use crate::checkpoint::{save_checkpoint, Checkpoint, Lineage};
use crate::config::{Algorithm, Arch, DataSection, ExperimentConfig, ExperimentKind, LabelKind, SweepPoint};
use crate::datafile::{load_dataset, save_dataset};
use crate::idx::{load_idx_dataset, standardize_pair, LabelMap};
use crate::output::Table;
use crate::{row, Error, Result};

// Seed-derivation tags.
const TAG_POINT: u64 = 0x9017;
const TAG_SOLUTION: u64 = 0x5011;
const TAG_ENERGY: u64 = 0xe4e6;
const TAG_PATHS: u64 = 0xa7a5;
const TAG_OPTIMIZED: u64 = 0x0b71;

/// A trained solution and where it was saved.
#[derive(Debug, Clone)]
pub struct Solution {
    pub algorithm: Algorithm,
    pub index: usize,
    pub seed: u64,
    pub net: Network,
    pub train_error: f64,
    pub test_error: Option<f64>,
    /// Path relative to the output directory.
    pub checkpoint: PathBuf,
}

/// Barrier statistics of one pair family under one path mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierStat {
    pub family: String,
    pub mode: String,
    pub mean: f64,
    pub std: f64,
    pub paths: usize,
}

/// Everything measured at one sweep point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub point: SweepPoint,
    pub params: usize,
    pub solutions: Vec<Solution>,
    pub energy: Vec<(Algorithm, usize, LocalEnergyProfile)>,
    pub barriers: Vec<BarrierStat>,
    pub distances: Vec<DistanceRow>,
    pub plane: Option<PlaneGrid>,
    pub warnings: Vec<String>,
}

impl PointResult {
    pub fn solutions_of(&self, alg: Algorithm) -> impl Iterator<Item = &Solution> {
        self.solutions.iter().filter(move |s| s.algorithm == alg)
    }

    /// Mean local energy of an algorithm's solutions at amplitude `delta`.
    pub fn energy_at(&self, alg: Algorithm, delta: f64) -> Option<f64> {
        let v: Vec<f64> = self
            .energy
            .iter()
            .filter(|(a, _, _)| *a == alg)
            .map(|(_, _, p)| p.at(delta))
            .collect();
        (!v.is_empty()).then(|| mean_std(&v).0)
    }

    pub fn mean_test_error(&self, alg: Algorithm) -> Option<f64> {
        let v: Option<Vec<f64>> = self.solutions_of(alg).map(|s| s.test_error).collect();
        v.filter(|v| !v.is_empty()).map(|v| mean_std(&v).0)
    }

    pub fn mean_train_error(&self, alg: Algorithm) -> Option<f64> {
        let v: Vec<f64> = self.solutions_of(alg).map(|s| s.train_error).collect();
        (!v.is_empty()).then(|| mean_std(&v).0)
    }

    pub fn barrier(&self, family: &str, mode: &str) -> Option<&BarrierStat> {
        self.barriers.iter().find(|b| b.family == family && b.mode == mode)
    }
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub points: Vec<PointResult>,
    /// Files written, relative to `out_dir`, in creation order.
    pub files: Vec<PathBuf>,
}

/// Family name of a within-algorithm pair, e.g. `sgd-sgd`.
pub fn family(alg: Algorithm) -> String {
    format!("{0}-{0}", alg.name())
}

/// Name of the optimized variant of a path mode.
pub fn optimized_mode_name(mode: PathMode) -> String {
    format!("{}-optimized", mode.name())
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    out: PathBuf,
    files: Vec<PathBuf>,
    points: Vec<PointResult>,
    tables: Tables,
}

struct Tables {
    solutions: Table,
    energy: Table,
    paths: Table,
    barriers: BTreeMap<String, Table>,
    distances: Table,
    plane: Table,
}

impl Tables {
    fn new(cfg: &ExperimentConfig) -> Self {
        let lead = sweep_column(cfg);
        let with = |cols: &[&str]| {
            let mut h: Vec<&str> = lead.iter().copied().collect();
            h.extend_from_slice(cols);
            Table::new(&h)
        };
        let mut path_cols = vec!["pair_id", "mode", "x", "train_error"];
        if cfg.probes.loss {
            path_cols.push("loss");
        }
        Self {
            solutions: with(&["algorithm", "solution", "seed", "train_error", "test_error", "checkpoint"]),
            energy: with(&["algorithm", "solution", "amplitude", "mean_dE", "std_dE", "samples"]),
            paths: with(&path_cols),
            barriers: BTreeMap::new(),
            distances: with(&["group_a", "group_b", "raw_mean", "raw_std", "aligned_mean", "aligned_std", "pairs"]),
            plane: Table::new(&["i", "j", "u", "v", "train_error"]),
        }
    }
}

/// Leading CSV column of sweep experiments.
fn sweep_column(cfg: &ExperimentConfig) -> Option<&'static str> {
    if !cfg.is_sweep() {
        return None;
    }
    Some(match cfg.data {
        DataSection::Hmm { .. } => "n",
        _ => "width",
    })
}

fn lead(cfg: &ExperimentConfig, p: &SweepPoint) -> Vec<String> {
    sweep_column(cfg).map(|_| p.value.to_string()).into_iter().collect()
}

fn with_lead(cfg: &ExperimentConfig, p: &SweepPoint, rest: Vec<String>) -> Vec<String> {
    let mut r = lead(cfg, p);
    r.extend(rest);
    r
}

fn point_dir(cfg: &ExperimentConfig, p: &SweepPoint) -> String {
    match sweep_column(cfg) {
        Some(c) => format!("{c}{}", p.value),
        None => "main".to_string(),
    }
}

fn point_label(cfg: &ExperimentConfig, p: &SweepPoint) -> String {
    match sweep_column(cfg) {
        Some(c) => format!("{c}={}", p.value),
        None => "main".to_string(),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Runs an experiment, writing into `cfg.out` (or `out` when given).
///
/// On failure the error names the stage; files written so far are kept and
/// the run manifest is marked as failed.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunSummary> {
    cfg.validate()?;
    let out = match (out, &cfg.out) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => o.clone(),
        (None, None) => return Err(Error::Usage("no output directory: set `out` or pass --out".into())),
    };
    create_dir(&out)?;
    let mut run = Run {
        cfg,
        out,
        files: Vec::new(),
        points: Vec::new(),
        tables: Tables::new(cfg),
    };
    let result = run.execute();
    let status = match &result {
        Ok(()) => json!({"status": "complete"}),
        Err(e) => json!({
            "status": "failed",
            "stage": e.stage(),
            "error": e.to_string(),
            "partial": true,
        }),
    };
    let manifest_written = run.write_manifest(status);
    result?;
    manifest_written?;
    Ok(RunSummary {
        out_dir: run.out,
        points: run.points,
        files: run.files,
    })
}

impl Run<'_> {
    fn execute(&mut self) -> Result<()> {
        for point in self.cfg.sweep() {
            let label = point_label(self.cfg, &point);
            let (train, test) = self.load_data(&point).map_err(|e| e.in_stage(format!("data[{label}]")))?;
            match self.run_point(point, &train, test.as_ref()) {
                Ok(result) => {
                    self.points.push(result);
                    self.flush_tables()?;
                }
                Err(e) => {
                    // Keep whatever rows were produced before the failure.
                    let _ = self.flush_tables();
                    return Err(e);
                }
            }
        }
        Ok(())
    }

    fn record(&mut self, rel: PathBuf) {
        if !self.files.contains(&rel) {
            self.files.push(rel);
        }
    }

    fn load_data(&mut self, point: &SweepPoint) -> Result<(Dataset, Option<Dataset>)> {
        match &self.cfg.data {
            DataSection::Hmm { .. } => {
                let n = point.input_dim.expect("hmm sweep points carry N");
                let hcfg = self.cfg.hmm_config(n).expect("hmm data");
                let hmm = hmm_generate(&hcfg)?;
                let dir = PathBuf::from("datasets");
                create_dir(&self.out.join(&dir))?;
                let desc = format!(
                    "hmm D={} N={} P={} P_test={} seed={}",
                    hcfg.latent_dim, hcfg.input_dim, hcfg.train_size, hcfg.test_size, hcfg.seed
                );
                for (name, d) in [("train", &hmm.train), ("test", &hmm.test)] {
                    let rel = dir.join(format!("n{n}_{name}.ds"));
                    save_dataset(d, &desc, &self.out.join(&rel))?;
                    self.record(rel);
                }
                Ok((hmm.train, Some(hmm.test)))
            }
            DataSection::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                labels,
                train_size,
                test_size,
                standardize,
            } => {
                let map = match labels {
                    LabelKind::Parity => LabelMap::Parity,
                    LabelKind::Digits => LabelMap::Digits,
                };
                let mut train = load_idx_dataset(train_images, train_labels, *train_size, map)?;
                let mut test = match (test_images, test_labels) {
                    (Some(i), Some(l)) => Some(load_idx_dataset(i, l, *test_size, map)?),
                    _ => None,
                };
                if *standardize {
                    let mut t = test.take().unwrap_or_else(|| train.slice(0, 1));
                    standardize_pair(&mut train, &mut t)?;
                    if test_images.is_some() {
                        test = Some(t);
                    }
                }
                Ok((train, test))
            }
            DataSection::File { train, test } => {
                let tr = load_dataset(train)?;
                let te = test.as_ref().map(|t| load_dataset(t)).transpose()?;
                Ok((tr, te))
            }
        }
    }

    fn run_point(&mut self, point: SweepPoint, train: &Dataset, test: Option<&Dataset>) -> Result<PointResult> {
        let cfg = self.cfg;
        let label = point_label(cfg, &point);
        let pseed = rng::derive(rng::derive(cfg.seed, TAG_POINT), point.value as u64);
        let ckdir = PathBuf::from("checkpoints").join(point_dir(cfg, &point));
        create_dir(&self.out.join(&ckdir))?;

        let mut solutions = Vec::new();
        for &alg in &cfg.solutions.algorithms {
            for i in 0..cfg.solutions.per_algorithm {
                let stage = format!("train[{label},{}#{i}]", alg.name());
                let seed = rng::derive(rng::derive(pseed, TAG_SOLUTION + alg.tag()), i as u64);
                let sol = (|| -> Result<Solution> {
                    let template = build_template(cfg, &point, train.dim(), train.task.num_outputs(), seed)?;
                    let net = train_solution(cfg, alg, &template, train, seed)?;
                    let rel = ckdir.join(format!("{}_{i}.ckpt", alg.name()));
                    let mut ck = Checkpoint::new(net);
                    ck.lineage = Lineage {
                        seed: Some(cfg.seed),
                        derived_seed: Some(seed),
                        algorithm: Some(alg.name().to_string()),
                        stages: vec![label.clone(), format!("{}#{i}", alg.name())],
                    };
                    let train_error = ck.network.train_error(train)?;
                    let test_error = test.map(|t| ck.network.train_error(t)).transpose()?;
                    ck.metadata.insert("train_error".into(), crate::output::fmt_f64(train_error));
                    if let Some(t) = test_error {
                        ck.metadata.insert("test_error".into(), crate::output::fmt_f64(t));
                    }
                    save_checkpoint(&ck, &self.out.join(&rel))?;
                    Ok(Solution {
                        algorithm: alg,
                        index: i,
                        seed,
                        net: ck.network,
                        train_error,
                        test_error,
                        checkpoint: rel,
                    })
                })()
                .map_err(|e| e.in_stage(stage))?;
                self.record(sol.checkpoint.clone());
                self.tables.solutions.push(with_lead(
                    cfg,
                    &point,
                    row![
                        alg.name(),
                        i,
                        seed,
                        sol.train_error,
                        sol.test_error,
                        sol.checkpoint.display().to_string()
                    ],
                ));
                solutions.push(sol);
            }
        }
        let params = solutions[0].net.num_params();
        let mut result = PointResult {
            point,
            params,
            solutions,
            energy: Vec::new(),
            barriers: Vec::new(),
            distances: Vec::new(),
            plane: None,
            warnings: Vec::new(),
        };

        let kind = cfg.kind;
        let all = cfg.is_sweep();
        if all || kind == ExperimentKind::Flatness {
            self.energy_stage(&mut result, train, &label)?;
        }
        if all || kind == ExperimentKind::Paths {
            self.path_stage(&mut result, train, pseed, &label)?;
        }
        if all || kind == ExperimentKind::Distances {
            self.distance_stage(&mut result, &label)?;
        }
        if kind == ExperimentKind::Plane {
            self.plane_stage(&mut result, train, &label)?;
        }
        Ok(result)
    }

    fn energy_stage(&mut self, result: &mut PointResult, train: &Dataset, label: &str) -> Result<()> {
        let cfg = self.cfg;
        let amps = cfg.amplitudes();
        let samples = cfg.samples();
        let mode = cfg.perturb_mode();
        for sol in &result.solutions {
            let stage = format!("local-energy[{label},{}#{}]", sol.algorithm.name(), sol.index);
            let prof = local_energy(&sol.net, train, &amps, samples, mode, rng::derive(sol.seed, TAG_ENERGY))
                .map_err(|e| Error::from(e).in_stage(stage))?;
            for (k, &a) in prof.amplitudes.iter().enumerate() {
                self.tables.energy.push(with_lead(
                    cfg,
                    &result.point,
                    row![sol.algorithm.name(), sol.index, a, prof.mean[k], prof.std[k], samples],
                ));
            }
            result.energy.push((sol.algorithm, sol.index, prof));
        }
        Ok(())
    }

    fn push_scan(&mut self, point: &SweepPoint, pair_id: &str, mode: &str, scan: &PathScan, offset: f64, span: f64) {
        for (k, &x) in scan.fractions.iter().enumerate() {
            let mut r = row![pair_id, mode, offset + span * x, scan.train_errors[k]];
            if self.cfg.probes.loss {
                r.push(crate::output::fmt_f64(scan.losses.as_ref().map_or(f64::NAN, |l| l[k])));
            }
            self.tables.paths.push(with_lead(self.cfg, point, r));
        }
    }

    fn path_stage(&mut self, result: &mut PointResult, train: &Dataset, pseed: u64, label: &str) -> Result<()> {
        let cfg = self.cfg;
        let modes = cfg.path_modes()?;
        let points = cfg.points();
        let loss = cfg.probes.loss.then(|| Loss::for_task(train.task));
        let pseed = rng::derive(pseed, TAG_PATHS);
        for &alg in &cfg.solutions.algorithms {
            let sols: Vec<Solution> = result.solutions_of(alg).cloned().collect();
            let fam = family(alg);
            for &mode in &modes {
                // Random Hamming orders differ between A→B and B→A, so binary
                // families use ordered pairs; deterministic paths use each
                // unordered pair once.
                let realizations = if mode.is_hamming() { cfg.realizations() } else { 1 };
                let mut barriers = Vec::new();
                for (i, a) in sols.iter().enumerate() {
                    for (j, b) in sols.iter().enumerate() {
                        if i == j || (!mode.is_hamming() && j < i) {
                            continue;
                        }
                        for r in 0..realizations {
                            let pair_id = format!("{}{}-{}{}/r{r}", alg.name(), a.index, alg.name(), b.index);
                            let seed = rng::derive(
                                pseed,
                                (alg.tag() << 48) ^ ((i as u64) << 32) ^ ((j as u64) << 16) ^ r as u64,
                            );
                            let scan = path_scan_with_loss(&a.net, &b.net, train, mode, points, seed, loss)
                                .map_err(|e| Error::from(e).in_stage(format!("paths[{label},{pair_id},{}]", mode.name())))?;
                            barriers.push(barrier(&scan));
                            self.push_scan(&result.point, &pair_id, mode.name(), &scan, 0.0, 1.0);
                        }
                    }
                }
                let (mean, std) = mean_std(&barriers);
                result.barriers.push(BarrierStat {
                    family: fam.clone(),
                    mode: mode.name().to_string(),
                    mean,
                    std,
                    paths: barriers.len(),
                });
            }
            if cfg.probes.optimize {
                self.optimized_stage(result, train, &sols, alg, &modes, pseed, label)?;
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn optimized_stage(
        &mut self,
        result: &mut PointResult,
        train: &Dataset,
        sols: &[Solution],
        alg: Algorithm,
        modes: &[PathMode],
        pseed: u64,
        label: &str,
    ) -> Result<()> {
        let cfg = self.cfg;
        let points = cfg.points();
        let oseed = rng::derive(pseed, TAG_OPTIMIZED);
        for &mode in modes {
            let mut barriers = Vec::new();
            let name = optimized_mode_name(mode);
            for i in 0..sols.len() {
                for j in i + 1..sols.len() {
                    for m in 0..cfg.midpoints() {
                        let pair_id = format!("{}{}-{}{}/m{m}", alg.name(), sols[i].index, alg.name(), sols[j].index);
                        let seed = rng::derive(oseed, (alg.tag() << 48) ^ ((i as u64) << 32) ^ ((j as u64) << 16) ^ m as u64);
                        let tcfg = TrainConfig {
                            loss: Loss::for_task(train.task),
                            ..cfg.midpoint_config(rng::derive(seed, 1))?
                        };
                        match optimized_path(&sols[i].net, &sols[j].net, train, &tcfg, mode, seed, points) {
                            Ok(p) => {
                                barriers.push(p.barrier);
                                self.push_scan(&result.point, &pair_id, &name, &p.first, 0.0, 0.5);
                                self.push_scan(&result.point, &pair_id, &name, &p.second, 0.5, 0.5);
                            }
                            Err(landscape_core::probes::ProbeError::NonConvergence { achieved }) => {
                                result.warnings.push(format!(
                                    "{label}: midpoint {pair_id} ({}) stopped at train error {achieved}",
                                    mode.name()
                                ));
                            }
                            Err(e) => {
                                return Err(Error::from(e).in_stage(format!("optimized-paths[{label},{pair_id},{}]", mode.name())))
                            }
                        }
                    }
                }
            }
            let (mean, std) = mean_std(&barriers);
            result.barriers.push(BarrierStat {
                family: family(alg),
                mode: name,
                mean,
                std,
                paths: barriers.len(),
            });
        }
        Ok(())
    }

    fn distance_stage(&mut self, result: &mut PointResult, label: &str) -> Result<()> {
        let groups: Vec<SolutionGroup> = self
            .cfg
            .solutions
            .algorithms
            .iter()
            .map(|&a| SolutionGroup {
                name: a.name().to_string(),
                nets: result.solutions_of(a).map(|s| s.net.clone()).collect(),
            })
            .collect();
        let rows = distance_study(&groups, self.cfg.model.binary)
            .map_err(|e| Error::from(e).in_stage(format!("distances[{label}]")))?;
        for r in &rows {
            self.tables.distances.push(with_lead(
                self.cfg,
                &result.point,
                row![
                    r.group_a.as_str(),
                    r.group_b.as_str(),
                    r.raw_mean,
                    r.raw_std,
                    r.aligned_mean,
                    r.aligned_std,
                    r.pairs
                ],
            ));
        }
        result.distances = rows;
        Ok(())
    }

    fn plane_stage(&mut self, result: &mut PointResult, train: &Dataset, label: &str) -> Result<()> {
        let cfg = self.cfg;
        let plane = cfg.plane.as_ref().expect("validated");
        let mut anchors = Vec::new();
        for a in &plane.anchors {
            let (alg, idx) = cfg.parse_anchor(a)?;
            let sol = result
                .solutions
                .iter()
                .find(|s| s.algorithm == alg && s.index == idx)
                .expect("anchor validated");
            anchors.push(sol.net.clone());
        }
        let opts = PlaneOptions {
            resolution: plane.resolution,
            margin: plane.margin,
            normalized: plane.normalized,
            binarized: cfg.model.binary,
        };
        let grid = plane_scan(&anchors[0], &anchors[1], &anchors[2], train, &opts)
            .map_err(|e| Error::from(e).in_stage(format!("plane[{label}]")))?;
        for i in 0..grid.alphas.len() {
            for j in 0..grid.betas.len() {
                self.tables
                    .plane
                    .push(row![i, j, grid.alphas[i], grid.betas[j], grid.errors[[i, j]]]);
            }
        }
        result.plane = Some(grid);
        Ok(())
    }

    fn flush_tables(&mut self) -> Result<()> {
        // Barrier-vs-sweep tables, one per pair family.
        let lead_col = sweep_column(self.cfg);
        let mut barrier_tables: BTreeMap<String, Table> = BTreeMap::new();
        for p in &self.points {
            for b in &p.barriers {
                let t = barrier_tables.entry(b.family.clone()).or_insert_with(|| {
                    let mut h: Vec<&str> = lead_col.iter().copied().collect();
                    h.extend_from_slice(&["params", "mode", "barrier_mean", "barrier_std", "paths"]);
                    Table::new(&h)
                });
                t.push(with_lead(
                    self.cfg,
                    &p.point,
                    row![p.params, b.mode.as_str(), b.mean, b.std, b.paths],
                ));
            }
        }
        self.tables.barriers = barrier_tables;

        let mut outputs: Vec<(String, Table)> = vec![("solutions.csv".into(), self.tables.solutions.clone())];
        let t = &self.tables;
        if !t.energy.is_empty() {
            outputs.push(("local_energy.csv".into(), t.energy.clone()));
        }
        if !t.paths.is_empty() {
            outputs.push(("paths.csv".into(), t.paths.clone()));
        }
        for (fam, table) in &t.barriers {
            outputs.push((format!("barriers_{fam}.csv"), table.clone()));
        }
        if !t.distances.is_empty() {
            outputs.push(("distances.csv".into(), t.distances.clone()));
        }
        if !t.plane.is_empty() {
            outputs.push(("plane.csv".into(), t.plane.clone()));
        }
        for (name, table) in outputs {
            table.write(&self.out.join(&name))?;
            self.record(PathBuf::from(name));
        }
        Ok(())
    }

    fn write_manifest(&mut self, status: Value) -> Result<()> {
        let cfg = self.cfg;
        let train_json = |t: &TrainConfig| {
            json!({
                "epochs": t.epochs,
                "batch_size": t.batch_size,
                "lr0": t.lr0,
                "momentum": t.momentum,
                "nesterov": t.nesterov,
                "schedule": format!("{:?}", t.schedule).to_lowercase(),
                "loss": format!("{:?}", t.loss),
            })
        };
        let mut resolved = serde_json::Map::new();
        for &alg in &cfg.solutions.algorithms {
            let v = match alg {
                Algorithm::Sgd => train_json(&cfg.sgd_config(0)?),
                Algorithm::Rsgd => {
                    let (t, r) = cfg.rsgd_config(0)?;
                    json!({"train": train_json(&t), "replicas": r.num_replicas, "gamma0": r.gamma0,
                           "gamma1": r.gamma1, "independent_streams": r.independent_streams})
                }
                Algorithm::Adv => {
                    let a = cfg.adv_config(0)?;
                    json!({"replication": a.replication, "zero_pixel_fraction": a.zero_pixel_fraction,
                           "keep_original": a.keep_original, "pretrain": train_json(&a.pretrain),
                           "finetune": train_json(&a.finetune)})
                }
            };
            resolved.insert(alg.name().to_string(), v);
        }
        if cfg.probes.optimize {
            resolved.insert("midpoint".into(), train_json(&cfg.midpoint_config(0)?));
        }
        let modes: Vec<&str> = cfg.path_modes()?.iter().map(|m| m.name()).collect();
        let probes = json!({
            "perturbation": format!("{:?}", cfg.perturb_mode()).to_lowercase(),
            "amplitudes": cfg.amplitudes(),
            "samples": cfg.samples(),
            "delta": cfg.delta(),
            "points": cfg.points(),
            "realizations": cfg.realizations(),
            "modes": modes,
            "optimize": cfg.probes.optimize,
            "midpoints": cfg.midpoints(),
        });
        let delta = cfg.delta();
        let points: Vec<Value> = self
            .points
            .iter()
            .map(|p| {
                let algs: serde_json::Map<String, Value> = cfg
                    .solutions
                    .algorithms
                    .iter()
                    .map(|&a| {
                        (
                            a.name().to_string(),
                            json!({
                                "mean_train_error": p.mean_train_error(a),
                                "mean_test_error": p.mean_test_error(a),
                                "local_energy_at_delta": p.energy_at(a, delta),
                            }),
                        )
                    })
                    .collect();
                let barriers: Vec<Value> = p
                    .barriers
                    .iter()
                    .map(|b| json!({"family": b.family, "mode": b.mode, "mean": b.mean, "std": b.std, "paths": b.paths}))
                    .collect();
                let solutions: Vec<Value> = p
                    .solutions
                    .iter()
                    .map(|s| {
                        json!({"algorithm": s.algorithm.name(), "index": s.index, "seed": s.seed,
                               "train_error": s.train_error, "test_error": s.test_error,
                               "checkpoint": s.checkpoint.display().to_string()})
                    })
                    .collect();
                json!({
                    "sweep_value": p.point.value,
                    "input_dim": p.point.input_dim,
                    "width": p.point.width,
                    "hmm_seed": p.point.input_dim.and_then(|n| cfg.hmm_config(n)).map(|h| h.seed),
                    "params": p.params,
                    "algorithms": algs,
                    "barriers": barriers,
                    "solutions": solutions,
                    "warnings": p.warnings,
                })
            })
            .collect();
        let files: Vec<String> = self.files.iter().map(|f| f.display().to_string()).collect();
        let manifest = json!({
            "run": status,
            "package_version": env!("CARGO_PKG_VERSION"),
            "config": serde_json::to_value(cfg)?,
            "resolved": {"training": resolved, "probes": probes},
            "points": points,
            "files": files,
        });
        let path = self.out.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.record(PathBuf::from("manifest.json"));
        Ok(())
    }
}

/// Untrained network of the configured architecture for `point`.
pub fn build_template(cfg: &ExperimentConfig, point: &SweepPoint, dim: usize, outputs: usize, seed: u64) -> Result<Network> {
    let m = &cfg.model;
    let mut r = rng::child(seed, 0);
    let net = match m.arch {
        Arch::Perceptron => Network::perceptron(dim, &mut r)?,
        Arch::Committee => Network::committee(dim, m.hidden[0], &mut r)?,
        Arch::Mlp => {
            let mut widths = vec![dim];
            match point.width {
                Some(w) => widths.extend(std::iter::repeat_n(w, m.hidden.len().max(1))),
                None => widths.extend_from_slice(&m.hidden),
            }
            widths.push(outputs);
            Network::mlp(&widths, m.binary, m.bias, &mut r)?
        }
    };
    Ok(net)
}

/// Trains one solution with the configured settings of `alg`.
pub fn train_solution(cfg: &ExperimentConfig, alg: Algorithm, template: &Network, train: &Dataset, seed: u64) -> Result<Network> {
    let tseed = rng::derive(seed, 1);
    let loss = Loss::for_task(train.task);
    let net = match alg {
        Algorithm::Sgd => {
            let t = TrainConfig { loss, ..cfg.sgd_config(tseed)? };
            sgd_train(template, train, None, &t)?.0
        }
        Algorithm::Rsgd => {
            let (t, r) = cfg.rsgd_config(tseed)?;
            rsgd_train(template, train, None, &TrainConfig { loss, ..t }, &r)?.0
        }
        Algorithm::Adv => {
            let mut a = cfg.adv_config(tseed)?;
            a.pretrain.loss = loss;
            a.finetune.loss = loss;
            adv_init_train(template, train, None, &a, rng::derive(seed, 2))?.0
        }
    };
    Ok(net)
}
