use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use landscape::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Lineage};
use landscape::config::{
    Algorithm, Arch, DataSection, ExperimentConfig, ExperimentKind, ModelSection, SolutionsSection, SweepPoint,
    TrainSection,
};
use landscape::core::data::{hmm_generate, HmmConfig};
use landscape::core::probes::{
    barrier, distance_study, local_energy, optimized_path, path_scan_with_loss, plane_scan, PathMode, PerturbMode,
    PlaneOptions, SolutionGroup, DEFAULT_POINTS,
};
use landscape::core::symmetry::{align, normalize};
use landscape::core::train::{Loss, TrainConfig};
use landscape::core::{rng, Dataset, Network};
use landscape::datafile::{load_dataset, save_dataset};
use landscape::experiment::{build_template, run_experiment, train_solution};
use landscape::output::{fmt_f64, Table};
use landscape::{exit, row, Error, Result};

#[derive(Parser)]
#[command(name = "landscape", version, about = "Train small networks and probe their loss landscape")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Linear,
    LinearAligned,
    GeodesicAligned,
    Hamming,
    HammingAligned,
}

impl ModeArg {
    fn mode(self) -> PathMode {
        match self {
            ModeArg::Linear => PathMode::Linear,
            ModeArg::LinearAligned => PathMode::LinearAligned,
            ModeArg::GeodesicAligned => PathMode::GeodesicAligned,
            ModeArg::Hamming => PathMode::Hamming,
            ModeArg::HammingAligned => PathMode::HammingAligned,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Perceptron,
    Committee,
    Mlp,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgArg {
    Sgd,
    Rsgd,
    Adv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a hidden-manifold dataset (train.ds and test.ds in --out).
    HmmGen {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 501)]
        latent_dim: usize,
        #[arg(long)]
        input_dim: usize,
        #[arg(long, default_value_t = 1503)]
        train_size: usize,
        #[arg(long, default_value_t = 2000)]
        test_size: usize,
    },
    /// Train one network and write its checkpoint.
    Train {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "mlp")]
        arch: ArchArg,
        /// Hidden widths, comma separated.
        #[arg(long, value_delimiter = ',')]
        hidden: Vec<usize>,
        #[arg(long)]
        binary: bool,
        #[arg(long)]
        bias: bool,
        #[arg(long, value_enum, default_value = "sgd")]
        algorithm: AlgArg,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Normalize a continuous network (rescaling symmetry).
    Normalize {
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Relabel the hidden units of `b` to match `a`.
    Align {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train error along a path between two networks (CSV).
    ScanPath {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, default_value_t = DEFAULT_POINTS)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        loss: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train error on the plane through three networks (CSV).
    ScanPlane {
        a: PathBuf,
        b: PathBuf,
        c: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 41)]
        points: usize,
        #[arg(long, default_value_t = 0.25)]
        margin: f64,
        #[arg(long)]
        normalized: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Local-energy profile of a network (CSV).
    LocalEnergy {
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Amplitudes, comma separated; defaults to the standard grid.
        #[arg(long, value_delimiter = ',')]
        amplitudes: Vec<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Raw and aligned distances between groups of networks (CSV).
    /// Each argument is `group=checkpoint`.
    Distances {
        members: Vec<String>,
        #[arg(long)]
        binary: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a midpoint between two networks and scan the bent path (CSV).
    OptimizeMidpoint {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_POINTS)]
        points: usize,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Where to write the midpoint checkpoint.
        #[arg(long)]
        midpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment described by a TOML config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::SUCCESS };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn emit(table: &Table, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => table.write(p),
        None => {
            let bytes = table.to_bytes()?;
            print!("{}", String::from_utf8_lossy(&bytes));
            Ok(())
        }
    }
}

fn net(path: &Path) -> Result<Network> {
    Ok(load_checkpoint(path)?.network)
}

fn data(path: &Path) -> Result<Dataset> {
    Ok(load_dataset(path)?)
}

fn derived(input: Checkpoint, network: Network, stage: &str) -> Checkpoint {
    let mut lineage = input.lineage;
    lineage.stages.push(stage.to_string());
    Checkpoint {
        network,
        lineage,
        metadata: input.metadata,
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::HmmGen {
            seed,
            out,
            latent_dim,
            input_dim,
            train_size,
            test_size,
        } => {
            let cfg = HmmConfig {
                latent_dim,
                input_dim,
                train_size,
                test_size,
                seed,
            };
            let hmm = hmm_generate(&cfg)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(out.display().to_string(), e))?;
            let desc = format!("hmm D={latent_dim} N={input_dim} P={train_size} P_test={test_size} seed={seed}");
            save_dataset(&hmm.train, &desc, &out.join("train.ds"))?;
            save_dataset(&hmm.test, &desc, &out.join("test.ds"))?;
            Ok(())
        }
        Command::Train {
            seed,
            out,
            data: path,
            arch,
            hidden,
            binary,
            bias,
            algorithm,
            epochs,
            lr,
            batch_size,
        } => {
            let train = data(&path)?;
            let arch = match arch {
                ArchArg::Perceptron => Arch::Perceptron,
                ArchArg::Committee => Arch::Committee,
                ArchArg::Mlp => Arch::Mlp,
            };
            let alg = match algorithm {
                AlgArg::Sgd => Algorithm::Sgd,
                AlgArg::Rsgd => Algorithm::Rsgd,
                AlgArg::Adv => Algorithm::Adv,
            };
            let overrides = TrainSection {
                epochs,
                lr,
                batch_size,
                ..Default::default()
            };
            let mut cfg = ExperimentConfig {
                kind: ExperimentKind::Flatness,
                seed,
                out: None,
                data: DataSection::File {
                    train: path.clone(),
                    test: None,
                },
                model: ModelSection {
                    arch,
                    hidden,
                    binary: binary || arch != Arch::Mlp,
                    bias,
                    width_sweep: Vec::new(),
                },
                solutions: SolutionsSection {
                    algorithms: vec![alg],
                    per_algorithm: 1,
                },
                sgd: TrainSection::default(),
                rsgd: Default::default(),
                adv: Default::default(),
                midpoint: None,
                probes: Default::default(),
                plane: None,
            };
            match alg {
                Algorithm::Sgd => cfg.sgd = overrides,
                Algorithm::Rsgd => {
                    cfg.rsgd.epochs = epochs;
                    cfg.rsgd.lr = lr;
                    cfg.rsgd.batch_size = batch_size;
                }
                Algorithm::Adv => cfg.adv.finetune = overrides,
            }
            cfg.validate()?;
            let point = SweepPoint {
                value: 0,
                input_dim: None,
                width: None,
            };
            let template = build_template(&cfg, &point, train.dim(), train.task.num_outputs(), seed)?;
            let network = train_solution(&cfg, alg, &template, &train, seed)?;
            let err = network.train_error(&train)?;
            let mut ck = Checkpoint::new(network);
            ck.lineage = Lineage {
                seed: Some(seed),
                derived_seed: Some(seed),
                algorithm: Some(alg.name().to_string()),
                stages: vec![format!("train:{}", path.display())],
            };
            ck.metadata.insert("train_error".into(), fmt_f64(err));
            save_checkpoint(&ck, &out)?;
            println!("train_error {}", fmt_f64(err));
            Ok(())
        }
        Command::Normalize { checkpoint, out } => {
            let ck = load_checkpoint(&checkpoint)?;
            let n = normalize(&ck.network)?;
            save_checkpoint(&derived(ck, n, "normalize"), &out)?;
            Ok(())
        }
        Command::Align { a, b, out } => {
            let a = net(&a)?;
            let ck = load_checkpoint(&b)?;
            let (a, b) = if a.is_binary() {
                (a, ck.network.clone())
            } else {
                (normalize(&a)?, normalize(&ck.network)?)
            };
            let al = align(&a, &b)?;
            save_checkpoint(&derived(ck, al.aligned, "align"), &out)?;
            Ok(())
        }
        Command::ScanPath {
            a,
            b,
            data: d,
            mode,
            points,
            seed,
            loss,
            out,
        } => {
            let train = data(&d)?;
            let loss = loss.then(|| Loss::for_task(train.task));
            let mode = mode.mode();
            let scan = path_scan_with_loss(&net(&a)?, &net(&b)?, &train, mode, points, seed, loss)?;
            let mut header = vec!["pair_id", "mode", "x", "train_error"];
            if loss.is_some() {
                header.push("loss");
            }
            let mut t = Table::new(&header);
            for (k, &x) in scan.fractions.iter().enumerate() {
                let mut r = row!["0", mode.name(), x, scan.train_errors[k]];
                if let Some(l) = &scan.losses {
                    r.push(fmt_f64(l[k]));
                }
                t.push(r);
            }
            emit(&t, out.as_deref())?;
            eprintln!("barrier {}", fmt_f64(barrier(&scan)));
            Ok(())
        }
        Command::ScanPlane {
            a,
            b,
            c,
            data: d,
            points,
            margin,
            normalized,
            out,
        } => {
            let train = data(&d)?;
            let (a, b, c) = (net(&a)?, net(&b)?, net(&c)?);
            let opts = PlaneOptions {
                resolution: points,
                margin,
                normalized,
                binarized: a.is_binary(),
            };
            let g = plane_scan(&a, &b, &c, &train, &opts)?;
            let mut t = Table::new(&["i", "j", "u", "v", "train_error"]);
            for i in 0..g.alphas.len() {
                for j in 0..g.betas.len() {
                    t.push(row![i, j, g.alphas[i], g.betas[j], g.errors[[i, j]]]);
                }
            }
            emit(&t, out.as_deref())
        }
        Command::LocalEnergy {
            checkpoint,
            data: d,
            amplitudes,
            samples,
            seed,
            out,
        } => {
            let train = data(&d)?;
            let n = net(&checkpoint)?;
            let mode = PerturbMode::for_network(&n);
            let amps = if amplitudes.is_empty() {
                mode.default_amplitudes()
            } else {
                amplitudes
            };
            let samples = samples.unwrap_or_else(|| mode.default_samples());
            let prof = local_energy(&n, &train, &amps, samples, mode, seed)?;
            let algorithm = load_checkpoint(&checkpoint)?.lineage.algorithm.unwrap_or_default();
            let mut t = Table::new(&["algorithm", "amplitude", "mean_dE", "std_dE", "samples"]);
            for (k, &a) in prof.amplitudes.iter().enumerate() {
                t.push(row![algorithm.as_str(), a, prof.mean[k], prof.std[k], samples]);
            }
            emit(&t, out.as_deref())
        }
        Command::Distances { members, binary, out } => {
            let mut groups: Vec<SolutionGroup> = Vec::new();
            for m in &members {
                let (name, path) = m
                    .split_once('=')
                    .ok_or_else(|| Error::Usage(format!("{m:?} is not group=checkpoint")))?;
                let n = net(Path::new(path))?;
                match groups.iter_mut().find(|g| g.name == name) {
                    Some(g) => g.nets.push(n),
                    None => groups.push(SolutionGroup {
                        name: name.to_string(),
                        nets: vec![n],
                    }),
                }
            }
            if groups.is_empty() {
                return Err(Error::Usage("no checkpoints given".into()));
            }
            let binary = binary || groups[0].nets[0].is_binary();
            let rows = distance_study(&groups, binary)?;
            let mut t = Table::new(&["group_a", "group_b", "raw_mean", "raw_std", "aligned_mean", "aligned_std", "pairs"]);
            for r in rows {
                t.push(row![r.group_a, r.group_b, r.raw_mean, r.raw_std, r.aligned_mean, r.aligned_std, r.pairs]);
            }
            emit(&t, out.as_deref())
        }
        Command::OptimizeMidpoint {
            a,
            b,
            data: d,
            mode,
            seed,
            points,
            epochs,
            lr,
            midpoint,
            out,
        } => {
            let train = data(&d)?;
            let (a, b) = (net(&a)?, net(&b)?);
            let mut cfg = if a.is_binary() {
                TrainConfig::binary_default(rng::derive(seed, 1))
            } else {
                TrainConfig::continuous_default(rng::derive(seed, 1))
            };
            cfg.loss = Loss::for_task(train.task);
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(l) = lr {
                cfg.lr0 = l;
            }
            let mode = mode.mode();
            let p = optimized_path(&a, &b, &train, &cfg, mode, seed, points)?;
            let mut t = Table::new(&["pair_id", "mode", "x", "train_error"]);
            for (scan, offset) in [(&p.first, 0.0), (&p.second, 0.5)] {
                for (k, &x) in scan.fractions.iter().enumerate() {
                    t.push(row!["0", mode.name(), offset + 0.5 * x, scan.train_errors[k]]);
                }
            }
            emit(&t, out.as_deref())?;
            if let Some(path) = midpoint {
                let mut ck = Checkpoint::new(p.midpoint);
                ck.lineage.seed = Some(seed);
                ck.lineage.stages.push(format!("midpoint:{}", mode.name()));
                save_checkpoint(&ck, &path)?;
            }
            eprintln!("barrier {} midpoint_error {}", fmt_f64(p.barrier), fmt_f64(p.midpoint_error));
            Ok(())
        }
        Command::Run { config, out, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let summary = run_experiment(&cfg, out.as_deref())?;
            for p in &summary.points {
                for w in &p.warnings {
                    eprintln!("warning: {w}");
                }
            }
            println!("{}", summary.out_dir.join("manifest.json").display());
            Ok(())
        }
    }
}
