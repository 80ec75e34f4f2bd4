//! Solution samplers: SGD (optionally with Nesterov momentum), replicated SGD
//! and SGD from an adversarial initialization.
//!
//! Binary layers are trained BinaryNet-style: updates go to the latent
//! weights, which are clipped to `[-1, 1]` and re-binarized after each step.

mod backprop;
mod optim;

use alloc::vec::Vec;

use libm::{cos, pow};
use ndarray::Array2;
use rand::seq::SliceRandom;

pub use backprop::{backprop, batch_loss, check_loss, BatchEval, Gradient, LayerGrad};
pub use optim::Optimizer;

use crate::data::{self, DataError};
use crate::nn::{Dataset, Network, NnError};
use crate::rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid training configuration: {0}")]
    Config(&'static str),
    #[error("loss {loss:?} does not fit a network with {outputs} outputs")]
    LossArity { loss: Loss, outputs: usize },
    #[error("loss became non-finite")]
    NonFiniteLoss,
    #[error("parameters diverged during epoch {epoch}")]
    Diverged { epoch: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Loss {
    /// Softmax cross-entropy over class indices.
    CrossEntropy,
    /// Logistic loss on a single output with `±1` labels.
    BinaryCrossEntropy,
}

impl Loss {
    pub fn for_task(task: crate::nn::Task) -> Self {
        match task {
            crate::nn::Task::Binary => Loss::BinaryCrossEntropy,
            crate::nn::Task::Classes(_) => Loss::CrossEntropy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Schedule {
    Cosine,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub schedule: Schedule,
    pub loss: Loss,
    pub seed: u64,
}

impl TrainConfig {
    /// Nesterov SGD, cosine annealing, batch 128, lr 0.02, 300 epochs.
    pub fn continuous_default(seed: u64) -> Self {
        Self {
            epochs: 300,
            batch_size: 128,
            lr0: 0.02,
            momentum: 0.9,
            nesterov: true,
            schedule: Schedule::Cosine,
            loss: Loss::CrossEntropy,
            seed,
        }
    }

    /// Plain SGD on the logistic loss, batch 100, constant lr 1.0, 200 epochs.
    pub fn binary_default(seed: u64) -> Self {
        Self {
            epochs: 200,
            batch_size: 100,
            lr0: 1.0,
            momentum: 0.0,
            nesterov: false,
            schedule: Schedule::Constant,
            loss: Loss::BinaryCrossEntropy,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1"));
        }
        if !(self.lr0 > 0.0) || !self.lr0.is_finite() {
            return Err(TrainError::Config("lr0 must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::Config("momentum must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Learning rate for epoch `t`.
    pub fn lr_at(&self, t: usize) -> f64 {
        match self.schedule {
            Schedule::Cosine => cosine_lr(self.lr0, t as f64, self.epochs as f64),
            Schedule::Constant => self.lr0,
        }
    }
}

/// `lr0 · (1 + cos(π t / T)) / 2`.
pub fn cosine_lr(lr0: f64, t: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return lr0;
    }
    lr0 * (1.0 + cos(core::f64::consts::PI * t / total)) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicaConfig {
    pub num_replicas: usize,
    pub gamma0: f64,
    pub gamma1: f64,
    /// Give each replica its own shuffling stream. When false every replica
    /// shuffles with the stream of `TrainConfig::seed`.
    pub independent_streams: bool,
}

impl ReplicaConfig {
    /// Five replicas, `γ(t) = 0.002 · 1.002^t`.
    pub fn standard() -> Self {
        Self {
            num_replicas: 5,
            gamma0: 0.002,
            gamma1: 0.002,
            independent_streams: true,
        }
    }

    /// Elastic constant at epoch `t`: `γ0 (1 + γ1)^t`.
    pub fn gamma(&self, t: usize) -> f64 {
        self.gamma0 * pow(1.0 + self.gamma1, t as f64)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.num_replicas < 2 {
            return Err(TrainError::Config("RSGD needs at least two replicas"));
        }
        if !(self.gamma0 >= 0.0) || !(self.gamma1 >= 0.0) {
            return Err(TrainError::Config("elastic constants must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvConfig {
    /// Number of label-randomized copies `R`.
    pub replication: usize,
    pub zero_pixel_fraction: f64,
    /// Keep the clean patterns in the pretraining set. When false the
    /// pretraining set holds only the randomized copies.
    pub keep_original: bool,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
}

impl AdvConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(0.0..=1.0).contains(&self.zero_pixel_fraction) {
            return Err(TrainError::Config("zero_pixel_fraction must lie in [0, 1]"));
        }
        if self.replication == 0 && !self.keep_original {
            return Err(TrainError::Config("pretraining set would be empty"));
        }
        self.pretrain.validate()?;
        self.finetune.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Fraction of patterns misclassified by the pre-update network while
    /// streaming through the epoch's mini-batches.
    pub train_error: f64,
    pub test_error: Option<f64>,
    pub lr: f64,
    /// Mean mini-batch loss over the epoch.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
    /// Exact train error of the returned network on the full training set.
    pub final_train_error: f64,
}

/// One network being trained: parameters, optimizer state and its
/// shuffling stream.
struct Worker {
    net: Network,
    opt: Optimizer,
    rng: rng::Rng,
    order: Vec<usize>,
    trace: Vec<EpochStats>,
    loss_sum: f64,
    errors: usize,
    batches: usize,
}

impl Worker {
    fn new(net: Network, cfg: &TrainConfig, rng: rng::Rng, n: usize) -> Self {
        let opt = Optimizer::new(&net, cfg.momentum, cfg.nesterov);
        Self {
            net,
            opt,
            rng,
            order: (0..n).collect(),
            trace: Vec::new(),
            loss_sum: 0.0,
            errors: 0,
            batches: 0,
        }
    }

    fn start_epoch(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.loss_sum = 0.0;
        self.errors = 0;
        self.batches = 0;
    }

    fn step(&mut self, data: &Dataset, batch: usize, cfg: &TrainConfig, lr: f64) -> Result<(), TrainError> {
        let start = batch * cfg.batch_size;
        let end = (start + cfg.batch_size).min(self.order.len());
        let rows = &self.order[start..end];
        let inputs = data.inputs.select(ndarray::Axis(0), rows);
        let labels: Vec<i32> = rows.iter().map(|&r| data.labels[r]).collect();
        let eval = backprop(&self.net, inputs.view(), &labels, cfg.loss)?;
        self.loss_sum += eval.loss;
        self.errors += eval.errors;
        self.batches += 1;
        self.opt.step(&mut self.net, &eval.grad, lr as f32);
        Ok(())
    }

    fn end_epoch(
        &mut self,
        epoch: usize,
        n: usize,
        lr: f64,
        test: Option<&Dataset>,
    ) -> Result<(), TrainError> {
        if !params_finite(&self.net) {
            return Err(TrainError::Diverged { epoch });
        }
        let test_error = test.map(|t| self.net.train_error(t)).transpose()?;
        self.trace.push(EpochStats {
            train_error: self.errors as f64 / n as f64,
            test_error,
            lr,
            loss: self.loss_sum / self.batches.max(1) as f64,
        });
        Ok(())
    }
}

fn params_finite(net: &Network) -> bool {
    net.layers().iter().all(|l| {
        l.weights.iter().all(|v| v.is_finite())
            && l.latent.iter().flatten().all(|v| v.is_finite())
            && l.bias.iter().flatten().all(|v| v.is_finite())
    })
}

fn num_batches(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

/// Mini-batch SGD. All randomness comes from `cfg.seed`; `test`, when given,
/// is scored after every epoch.
pub fn sgd_train(
    net: &Network,
    data: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(Network, TrainTrace), TrainError> {
    cfg.validate()?;
    check_loss(net, data.task, cfg.loss)?;
    let n = data.len();
    let mut worker = Worker::new(net.clone(), cfg, rng::rng(cfg.seed), n);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        worker.start_epoch();
        for b in 0..num_batches(n, cfg.batch_size) {
            worker.step(data, b, cfg, lr)?;
        }
        worker.end_epoch(epoch, n, lr, test)?;
    }
    let final_train_error = worker.net.train_error(data)?;
    Ok((
        worker.net,
        TrainTrace {
            epochs: worker.trace,
            final_train_error,
        },
    ))
}

/// Replicated SGD: `y` replicas start from `template` and after every
/// mini-batch step each is pulled toward the replica mean,
/// `w_a ← w_a − κ (w_a − w̄)` with `κ = min(1, lr_t γ_t)`. Returns the replica
/// closest to the mean at the end of training.
pub fn rsgd_train(
    template: &Network,
    data: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
    rep: &ReplicaConfig,
) -> Result<(Network, TrainTrace), TrainError> {
    cfg.validate()?;
    rep.validate()?;
    check_loss(template, data.task, cfg.loss)?;
    let n = data.len();
    let mut workers: Vec<Worker> = (0..rep.num_replicas)
        .map(|a| {
            let stream = if rep.independent_streams {
                rng::child(cfg.seed, a as u64)
            } else {
                rng::rng(cfg.seed)
            };
            Worker::new(template.clone(), cfg, stream, n)
        })
        .collect();

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let kappa = (lr * rep.gamma(epoch)).min(1.0) as f32;
        for w in workers.iter_mut() {
            w.start_epoch();
        }
        for b in 0..num_batches(n, cfg.batch_size) {
            for w in workers.iter_mut() {
                w.step(data, b, cfg, lr)?;
            }
            if kappa > 0.0 {
                couple(&mut workers, kappa);
            }
        }
        for w in workers.iter_mut() {
            w.end_epoch(epoch, n, lr, test)?;
        }
    }

    let pick = closest_to_mean(&workers.iter().map(|w| &w.net).collect::<Vec<_>>());
    let worker = workers.swap_remove(pick);
    let final_train_error = worker.net.train_error(data)?;
    Ok((
        worker.net,
        TrainTrace {
            epochs: worker.trace,
            final_train_error,
        },
    ))
}

/// Elastic pull of every replica toward the replica mean, layer by layer.
fn couple(workers: &mut [Worker], kappa: f32) {
    let y = workers.len() as f32;
    let num_layers = workers[0].net.layers().len();
    for li in 0..num_layers {
        if workers[0].net.layers()[li].spec.frozen {
            continue;
        }
        let mut mean: Array2<f32> = Array2::zeros(workers[0].net.layers()[li].weights.dim());
        for w in workers.iter() {
            mean += w.net.layers()[li].trainable_weights();
        }
        mean.mapv_inplace(|v| v / y);
        let bias_mean = workers[0].net.layers()[li].bias.as_ref().map(|b0| {
            let mut m = b0.clone();
            for w in workers.iter().skip(1) {
                m += w.net.layers()[li].bias.as_ref().expect("same architecture");
            }
            m.mapv_inplace(|v| v / y);
            m
        });
        for w in workers.iter_mut() {
            let layer = &mut w.net.layers_mut()[li];
            layer
                .trainable_weights_mut()
                .zip_mut_with(&mean, |p, &m| *p -= kappa * (*p - m));
            if let (Some(b), Some(m)) = (layer.bias.as_mut(), bias_mean.as_ref()) {
                b.zip_mut_with(m, |p, &m| *p -= kappa * (*p - m));
            }
            layer.rebinarize();
        }
    }
}

/// Index of the network whose parameters are closest to the mean (lowest
/// index on ties).
pub fn closest_to_mean(nets: &[&Network]) -> usize {
    let params: Vec<Vec<f32>> = nets.iter().map(|n| n.params()).collect();
    let len = params[0].len();
    let mut mean = alloc::vec![0.0f64; len];
    for p in &params {
        for (m, &v) in mean.iter_mut().zip(p) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= params.len() as f64);
    let mut best = (0usize, f64::INFINITY);
    for (i, p) in params.iter().enumerate() {
        let d: f64 = p.iter().zip(&mean).map(|(&v, &m)| (v as f64 - m) * (v as f64 - m)).sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvTrace {
    pub pretrain: TrainTrace,
    /// Error of the pretrained network on the clean training labels.
    pub pretrain_clean_error: f64,
    pub finetune: TrainTrace,
}

/// Adversarial initialization: pretrain `template` on a poisoned copy of the
/// data (randomized labels, zeroed pixels), then fine-tune on the clean data
/// with momentum-free SGD.
pub fn adv_init_train(
    template: &Network,
    data: &Dataset,
    test: Option<&Dataset>,
    cfg: &AdvConfig,
    seed: u64,
) -> Result<(Network, AdvTrace), TrainError> {
    cfg.validate()?;
    let poisoned = data::poison(
        data,
        cfg.replication,
        cfg.zero_pixel_fraction,
        cfg.keep_original,
        seed,
    )?;
    let (pre, pretrain) = sgd_train(template, &poisoned, None, &cfg.pretrain)?;
    let pretrain_clean_error = pre.train_error(data)?;
    let finetune_cfg = TrainConfig {
        momentum: 0.0,
        nesterov: false,
        ..cfg.finetune
    };
    let (net, finetune) = sgd_train(&pre, data, test, &finetune_cfg)?;
    Ok((
        net,
        AdvTrace {
            pretrain,
            pretrain_clean_error,
            finetune,
        },
    ))
}
