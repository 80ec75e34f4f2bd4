//! Experiment configuration files (TOML). Every table rejects unknown keys;
//! the master seed has no default.

use std::path::{Path, PathBuf};

use landscape_core::data::HmmConfig;
use landscape_core::probes::{PathMode, PerturbMode, DEFAULT_POINTS};
use landscape_core::train::{AdvConfig, Loss, ReplicaConfig, Schedule, TrainConfig};
use landscape_core::Task;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config does not parse: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    HmmSweep,
    MnistParity,
    Flatness,
    Paths,
    Plane,
    Distances,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Sgd,
    Rsgd,
    Adv,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::Rsgd => "rsgd",
            Algorithm::Adv => "adv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sgd" => Some(Algorithm::Sgd),
            "rsgd" => Some(Algorithm::Rsgd),
            "adv" => Some(Algorithm::Adv),
            _ => None,
        }
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            Algorithm::Sgd => 1,
            Algorithm::Rsgd => 2,
            Algorithm::Adv => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSection {
    /// Hidden-manifold data; `input_dims` is the sweep for `hmm_sweep` and
    /// must hold a single value otherwise.
    Hmm {
        latent_dim: usize,
        input_dims: Vec<usize>,
        train_size: usize,
        test_size: usize,
    },
    /// IDX image/label files (MNIST layout).
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: Option<PathBuf>,
        test_labels: Option<PathBuf>,
        #[serde(default)]
        labels: LabelKind,
        train_size: Option<usize>,
        test_size: Option<usize>,
        #[serde(default = "yes")]
        standardize: bool,
    },
    /// Dataset files written by `hmm-gen` or by earlier runs.
    File { train: PathBuf, test: Option<PathBuf> },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    #[default]
    Parity,
    Digits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    /// Single binary layer with one output.
    Perceptron,
    /// One hidden sign layer summed by frozen unit weights; `hidden = [H]`.
    Committee,
    /// Fully connected network with `hidden` widths.
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub arch: Arch,
    #[serde(default)]
    pub hidden: Vec<usize>,
    pub binary: bool,
    #[serde(default)]
    pub bias: bool,
    /// Hidden widths to sweep (every hidden layer takes the value); only for
    /// `mnist_parity`.
    #[serde(default)]
    pub width_sweep: Vec<usize>,
}

/// Optional overrides of a [`TrainConfig`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub momentum: Option<f64>,
    pub nesterov: Option<bool>,
    pub schedule: Option<ScheduleName>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    Cosine,
    Constant,
}

impl TrainSection {
    pub fn apply(&self, mut cfg: TrainConfig) -> TrainConfig {
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.lr {
            cfg.lr0 = v;
        }
        if let Some(v) = self.momentum {
            cfg.momentum = v;
        }
        if let Some(v) = self.nesterov {
            cfg.nesterov = v;
        }
        if let Some(v) = self.schedule {
            cfg.schedule = match v {
                ScheduleName::Cosine => Schedule::Cosine,
                ScheduleName::Constant => Schedule::Constant,
            };
        }
        cfg
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RsgdSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub momentum: Option<f64>,
    pub nesterov: Option<bool>,
    pub schedule: Option<ScheduleName>,
    pub replicas: Option<usize>,
    pub gamma0: Option<f64>,
    pub gamma1: Option<f64>,
    pub independent_streams: Option<bool>,
}

impl RsgdSection {
    pub fn train(&self) -> TrainSection {
        TrainSection {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            momentum: self.momentum,
            nesterov: self.nesterov,
            schedule: self.schedule,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvSection {
    pub replication: Option<usize>,
    pub zero_pixel_fraction: Option<f64>,
    pub keep_original: Option<bool>,
    #[serde(default)]
    pub pretrain: TrainSection,
    #[serde(default)]
    pub finetune: TrainSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionsSection {
    pub algorithms: Vec<Algorithm>,
    pub per_algorithm: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    /// Perturbation amplitudes (σ or ε); defaults to the standard grid.
    pub amplitudes: Option<Vec<f64>>,
    pub samples: Option<usize>,
    /// Amplitude used to rank algorithms by local energy; defaults to the
    /// largest amplitude.
    pub delta: Option<f64>,
    pub points: Option<usize>,
    /// Random path orders (Hamming) per ordered pair.
    pub realizations: Option<usize>,
    pub modes: Option<Vec<String>>,
    /// Also build single-bend optimized paths.
    #[serde(default)]
    pub optimize: bool,
    /// Independent midpoints per pair for optimized paths.
    pub midpoints: Option<usize>,
    /// Record the loss along path scans.
    #[serde(default)]
    pub loss: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneSection {
    /// Three anchors written `algorithm:index`, e.g. `"sgd:0"`.
    pub anchors: Vec<String>,
    pub resolution: usize,
    #[serde(default)]
    pub margin: f64,
    #[serde(default)]
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub data: DataSection,
    pub model: ModelSection,
    pub solutions: SolutionsSection,
    #[serde(default)]
    pub sgd: TrainSection,
    #[serde(default)]
    pub rsgd: RsgdSection,
    #[serde(default)]
    pub adv: AdvSection,
    /// Training of optimized-path midpoints; defaults to the SGD settings.
    pub midpoint: Option<TrainSection>,
    #[serde(default)]
    pub probes: ProbeSection,
    pub plane: Option<PlaneSection>,
}

/// One point of an experiment sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepPoint {
    /// Input dimension (HMM) or hidden width (MLP); 0 when nothing sweeps.
    pub value: usize,
    pub input_dim: Option<usize>,
    pub width: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; relative data paths are resolved against the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        match &mut self.data {
            DataSection::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => {
                fix(train_images);
                fix(train_labels);
                test_images.iter_mut().for_each(fix);
                test_labels.iter_mut().for_each(fix);
            }
            DataSection::File { train, test } => {
                fix(train);
                test.iter_mut().for_each(fix);
            }
            DataSection::Hmm { .. } => {}
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let sweep_kind = matches!(self.kind, ExperimentKind::HmmSweep | ExperimentKind::MnistParity);
        match (&self.data, self.kind) {
            (DataSection::Hmm { .. }, ExperimentKind::MnistParity) => {
                return invalid("mnist_parity needs idx or file data")
            }
            (DataSection::Idx { .. } | DataSection::File { .. }, ExperimentKind::HmmSweep) => {
                return invalid("hmm_sweep needs hmm data")
            }
            _ => {}
        }
        if let DataSection::Hmm {
            latent_dim,
            input_dims,
            train_size,
            test_size,
        } = &self.data
        {
            if *latent_dim == 0 || *train_size == 0 || *test_size == 0 || input_dims.iter().any(|&n| n == 0) {
                return invalid("hmm dimensions and sizes must be positive");
            }
            if input_dims.is_empty() {
                return invalid("data.input_dims is empty");
            }
            if self.kind != ExperimentKind::HmmSweep && input_dims.len() != 1 {
                return invalid("only hmm_sweep accepts several input_dims");
            }
        }
        if let DataSection::Idx {
            labels,
            test_images,
            test_labels,
            ..
        } = &self.data
        {
            if test_images.is_some() != test_labels.is_some() {
                return invalid("test_images and test_labels go together");
            }
            if self.kind == ExperimentKind::MnistParity && *labels != LabelKind::Parity {
                return invalid("mnist_parity uses parity labels");
            }
        }
        let m = &self.model;
        match m.arch {
            Arch::Perceptron => {
                if !m.binary || !m.hidden.is_empty() || m.bias {
                    return invalid("a perceptron is binary, bias-free and has no hidden layers");
                }
            }
            Arch::Committee => {
                if !m.binary || m.hidden.len() != 1 || m.bias {
                    return invalid("a committee machine is binary, bias-free, with hidden = [H]");
                }
            }
            Arch::Mlp => {
                if m.hidden.is_empty() && m.width_sweep.is_empty() {
                    return invalid("an mlp needs hidden widths");
                }
            }
        }
        if m.hidden.iter().chain(&m.width_sweep).any(|&w| w == 0) {
            return invalid("widths must be positive");
        }
        if !m.width_sweep.is_empty() && (self.kind != ExperimentKind::MnistParity || m.arch != Arch::Mlp) {
            return invalid("width_sweep is only for mlp models in mnist_parity");
        }
        if self.kind == ExperimentKind::MnistParity && !m.binary {
            return invalid("mnist_parity trains binary networks");
        }
        if self.kind == ExperimentKind::Plane && self.plane.is_none() {
            return invalid("plane experiments need a [plane] table");
        }
        if self.kind != ExperimentKind::Plane && self.plane.is_some() {
            return invalid("[plane] is only for plane experiments");
        }
        let s = &self.solutions;
        if s.algorithms.is_empty() {
            return invalid("solutions.algorithms is empty");
        }
        let mut seen = s.algorithms.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != s.algorithms.len() {
            return invalid("solutions.algorithms has duplicates");
        }
        if s.per_algorithm == 0 {
            return invalid("solutions.per_algorithm must be positive");
        }
        let needs_pairs = sweep_kind || matches!(self.kind, ExperimentKind::Paths | ExperimentKind::Distances);
        if needs_pairs && s.per_algorithm < 2 {
            return invalid("path and distance studies need at least two solutions per algorithm");
        }
        // Resolve everything once so that errors surface before any work.
        for a in &s.algorithms {
            match a {
                Algorithm::Sgd => self.sgd_config(0)?.validate(),
                Algorithm::Rsgd => {
                    let (t, r) = self.rsgd_config(0)?;
                    t.validate().and_then(|_| r.validate())
                }
                Algorithm::Adv => self.adv_config(0)?.validate(),
            }
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", a.name())))?;
        }
        self.midpoint_config(0)?
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("midpoint: {e}")))?;
        self.path_modes()?;
        let p = &self.probes;
        let mode = self.perturb_mode();
        if let Some(a) = &p.amplitudes {
            if a.is_empty() || a.iter().any(|x| !(*x >= 0.0) || (mode == PerturbMode::Flip && *x > 1.0)) {
                return invalid("probes.amplitudes must be non-empty, non-negative (and at most 1 for flips)");
            }
        }
        if p.samples == Some(0) || p.realizations == Some(0) || p.midpoints == Some(0) {
            return invalid("probe counts must be positive");
        }
        if p.points.is_some_and(|n| n < 2) {
            return invalid("probes.points must be at least 2");
        }
        if let Some(d) = p.delta {
            if !self.amplitudes().iter().any(|a| (a - d).abs() < 1e-12) {
                return invalid("probes.delta must be one of the amplitudes");
            }
        }
        if let Some(plane) = &self.plane {
            if plane.anchors.len() != 3 {
                return invalid("plane.anchors needs exactly three entries");
            }
            for a in &plane.anchors {
                self.parse_anchor(a)?;
            }
            if plane.resolution < 2 {
                return invalid("plane.resolution must be at least 2");
            }
            if !(plane.margin >= 0.0) {
                return invalid("plane.margin must be non-negative");
            }
            if plane.normalized && m.binary {
                return invalid("normalized planes need continuous networks");
            }
        }
        Ok(())
    }

    pub fn parse_anchor(&self, s: &str) -> Result<(Algorithm, usize), ConfigError> {
        let (a, i) = s
            .split_once(':')
            .ok_or_else(|| ConfigError::Invalid(format!("anchor {s:?} is not algorithm:index")))?;
        let alg = Algorithm::parse(a).ok_or_else(|| ConfigError::Invalid(format!("unknown algorithm {a:?}")))?;
        let idx: usize = i
            .parse()
            .map_err(|_| ConfigError::Invalid(format!("bad anchor index in {s:?}")))?;
        if !self.solutions.algorithms.contains(&alg) || idx >= self.solutions.per_algorithm {
            return invalid(format!("anchor {s:?} names a solution that is not trained"));
        }
        Ok((alg, idx))
    }

    pub fn task_hint(&self) -> Task {
        match &self.data {
            DataSection::Idx {
                labels: LabelKind::Digits,
                ..
            } => Task::Classes(10),
            _ => Task::Binary,
        }
    }

    fn base_train(&self, seed: u64) -> TrainConfig {
        let mut cfg = if self.model.binary {
            TrainConfig::binary_default(seed)
        } else {
            TrainConfig::continuous_default(seed)
        };
        cfg.loss = Loss::for_task(self.task_hint());
        cfg
    }

    pub fn sgd_config(&self, seed: u64) -> Result<TrainConfig, ConfigError> {
        Ok(self.sgd.apply(self.base_train(seed)))
    }

    pub fn rsgd_config(&self, seed: u64) -> Result<(TrainConfig, ReplicaConfig), ConfigError> {
        let mut base = self.base_train(seed);
        if !self.model.binary {
            base.lr0 = 0.05;
        }
        let t = self.rsgd.train().apply(base);
        let std = ReplicaConfig::standard();
        let r = ReplicaConfig {
            num_replicas: self.rsgd.replicas.unwrap_or(std.num_replicas),
            gamma0: self.rsgd.gamma0.unwrap_or(std.gamma0),
            gamma1: self.rsgd.gamma1.unwrap_or(std.gamma1),
            independent_streams: self.rsgd.independent_streams.unwrap_or(std.independent_streams),
        };
        Ok((t, r))
    }

    pub fn adv_config(&self, seed: u64) -> Result<AdvConfig, ConfigError> {
        let base = self.base_train(seed);
        let (pre, fine) = if self.model.binary {
            (
                TrainConfig {
                    epochs: 500,
                    lr0: 10.0,
                    ..base
                },
                TrainConfig {
                    epochs: 200,
                    lr0: 5.0,
                    ..base
                },
            )
        } else {
            (
                base,
                TrainConfig {
                    momentum: 0.0,
                    nesterov: false,
                    ..base
                },
            )
        };
        let fraction = self.adv.zero_pixel_fraction.unwrap_or(0.1);
        if !(0.0..=1.0).contains(&fraction) {
            return invalid("adv.zero_pixel_fraction must lie in [0, 1]");
        }
        Ok(AdvConfig {
            replication: self.adv.replication.unwrap_or(1),
            zero_pixel_fraction: fraction,
            keep_original: self.adv.keep_original.unwrap_or(true),
            pretrain: self.adv.pretrain.apply(pre),
            finetune: self.adv.finetune.apply(fine),
        })
    }

    pub fn midpoint_config(&self, seed: u64) -> Result<TrainConfig, ConfigError> {
        let sgd = self.sgd_config(seed)?;
        Ok(match &self.midpoint {
            Some(m) => m.apply(sgd),
            None => sgd,
        })
    }

    pub fn perturb_mode(&self) -> PerturbMode {
        if self.model.binary {
            PerturbMode::Flip
        } else {
            PerturbMode::Multiplicative
        }
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.probes
            .amplitudes
            .clone()
            .unwrap_or_else(|| self.perturb_mode().default_amplitudes())
    }

    pub fn samples(&self) -> usize {
        self.probes.samples.unwrap_or_else(|| self.perturb_mode().default_samples())
    }

    pub fn delta(&self) -> f64 {
        self.probes
            .delta
            .unwrap_or_else(|| self.amplitudes().iter().copied().fold(0.0, f64::max))
    }

    pub fn points(&self) -> usize {
        self.probes.points.unwrap_or(DEFAULT_POINTS)
    }

    pub fn realizations(&self) -> usize {
        self.probes.realizations.unwrap_or(if self.model.binary { 5 } else { 1 })
    }

    pub fn midpoints(&self) -> usize {
        self.probes.midpoints.unwrap_or(if self.model.binary { 3 } else { 1 })
    }

    /// Path modes to scan. Binary networks default to raw and aligned
    /// Hamming paths (raw only for perceptrons, which have no symmetry);
    /// continuous ones to the three straight/geodesic variants.
    pub fn path_modes(&self) -> Result<Vec<PathMode>, ConfigError> {
        let modes = match &self.probes.modes {
            Some(names) => names
                .iter()
                .map(|n| PathMode::parse(n).ok_or_else(|| ConfigError::Invalid(format!("unknown path mode {n:?}"))))
                .collect::<Result<Vec<_>, _>>()?,
            None if self.model.binary && self.model.arch == Arch::Perceptron => vec![PathMode::Hamming],
            None if self.model.binary => vec![PathMode::Hamming, PathMode::HammingAligned],
            None => vec![PathMode::Linear, PathMode::LinearAligned, PathMode::GeodesicAligned],
        };
        if modes.is_empty() {
            return invalid("probes.modes is empty");
        }
        for m in &modes {
            if m.is_hamming() != self.model.binary {
                return invalid(format!("path mode {} does not fit this model", m.name()));
            }
        }
        Ok(modes)
    }

    /// Points of the sweep, in config order.
    pub fn sweep(&self) -> Vec<SweepPoint> {
        match &self.data {
            DataSection::Hmm { input_dims, .. } => input_dims
                .iter()
                .map(|&n| SweepPoint {
                    value: n,
                    input_dim: Some(n),
                    width: None,
                })
                .collect(),
            _ if !self.model.width_sweep.is_empty() => self
                .model
                .width_sweep
                .iter()
                .map(|&w| SweepPoint {
                    value: w,
                    input_dim: None,
                    width: Some(w),
                })
                .collect(),
            _ => vec![SweepPoint {
                value: 0,
                input_dim: None,
                width: None,
            }],
        }
    }

    pub fn hmm_config(&self, n: usize) -> Option<HmmConfig> {
        match &self.data {
            DataSection::Hmm {
                latent_dim,
                train_size,
                test_size,
                ..
            } => Some(HmmConfig {
                latent_dim: *latent_dim,
                input_dim: n,
                train_size: *train_size,
                test_size: *test_size,
                seed: landscape_core::rng::derive(self.seed, 0xda7a ^ n as u64),
            }),
            _ => None,
        }
    }

    pub fn is_sweep(&self) -> bool {
        matches!(self.kind, ExperimentKind::HmmSweep | ExperimentKind::MnistParity)
    }
}
