//! Dataset generation and transforms.

use alloc::vec::Vec;

use ndarray::{concatenate, Array2, Axis};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::{sign, Dataset, NnError, Task};
use crate::rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid generator configuration: {0}")]
    Config(&'static str),
    #[error("data has zero variance")]
    ZeroVariance,
    #[error("digit {0} is outside 0..=9")]
    BadDigit(i64),
    #[error("fraction {0} is outside [0, 1]")]
    BadFraction(f64),
}

/// Hidden-manifold (random features) generator settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HmmConfig {
    /// Latent (teacher) dimension `D`.
    pub latent_dim: usize,
    /// Student input dimension `N`.
    pub input_dim: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl HmmConfig {
    /// `P / D`.
    pub fn alpha_t(&self) -> f64 {
        self.train_size as f64 / self.latent_dim as f64
    }

    /// `D / N`.
    pub fn alpha_d(&self) -> f64 {
        self.latent_dim as f64 / self.input_dim as f64
    }
}

/// A generated hidden-manifold instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Hmm {
    pub train: Dataset,
    pub test: Dataset,
    /// `±1` teacher in the latent space.
    pub teacher: Vec<f32>,
}

/// Teacher `w ∈ {±1}^D`, latent patterns `ξ ~ N(0, I_D)`, labels
/// `sign(w·ξ)`, student inputs `sign(F ξ)` with one Gaussian `F ∈ R^{N×D}`
/// shared by the train and test splits.
pub fn hmm_generate(cfg: &HmmConfig) -> Result<Hmm, DataError> {
    if cfg.latent_dim == 0 || cfg.input_dim == 0 || cfg.train_size == 0 || cfg.test_size == 0 {
        return Err(DataError::Config("all sizes must be at least 1"));
    }
    let (d, n) = (cfg.latent_dim, cfg.input_dim);
    let mut r = rng::child(cfg.seed, 0);
    let teacher: Vec<f32> = (0..d).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let mut r = rng::child(cfg.seed, 1);
    let features = Array2::<f32>::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut r));

    let split = |tag: u64, size: usize| -> Result<Dataset, DataError> {
        let mut r = rng::child(cfg.seed, tag);
        let latent = Array2::<f32>::from_shape_simple_fn((size, d), || StandardNormal.sample(&mut r));
        let labels = latent
            .rows()
            .into_iter()
            .map(|xi| {
                let dot: f32 = xi.iter().zip(&teacher).map(|(a, b)| a * b).sum();
                sign(dot) as i32
            })
            .collect();
        let inputs = latent.dot(&features.t()).mapv(sign);
        Ok(Dataset::new(inputs, labels, Task::Binary)?)
    };
    let train = split(2, cfg.train_size)?;
    let test = split(3, cfg.test_size)?;
    Ok(Hmm {
        train,
        test,
        teacher,
    })
}

/// Global affine map giving the whole pixel population zero mean and unit
/// variance.
pub fn standardize(images: &Array2<f32>) -> Result<Array2<f32>, DataError> {
    if images.is_empty() {
        return Err(DataError::Config("no pixels to standardize"));
    }
    let (mean, std) = pixel_moments(images);
    if !(std > 0.0) {
        return Err(DataError::ZeroVariance);
    }
    Ok(images.mapv(|v| ((v as f64 - mean) / std) as f32))
}

/// Mean and standard deviation of the pixel population.
pub fn pixel_moments(images: &Array2<f32>) -> (f64, f64) {
    let count = images.len() as f64;
    let mean = images.iter().map(|&v| v as f64).sum::<f64>() / count;
    let var = images
        .iter()
        .map(|&v| {
            let c = v as f64 - mean;
            c * c
        })
        .sum::<f64>()
        / count;
    (mean, libm::sqrt(var))
}

/// Even digits map to `+1`, odd digits to `-1`.
pub fn parity_labels(digits: &[u8]) -> Result<Vec<i32>, DataError> {
    digits
        .iter()
        .map(|&d| match d {
            0..=9 => Ok(if d % 2 == 0 { 1 } else { -1 }),
            _ => Err(DataError::BadDigit(d as i64)),
        })
        .collect()
}

/// Labels redrawn i.i.d. uniformly over the task's classes.
pub fn randomize_labels(data: &Dataset, seed: u64) -> Dataset {
    let mut r = rng::rng(seed);
    let k = data.task.num_classes();
    let labels = (0..data.len()).map(|_| data.task.label(r.random_range(0..k))).collect();
    Dataset {
        inputs: data.inputs.clone(),
        labels,
        task: data.task,
    }
}

/// Sets exactly `⌊fraction · pixels⌋` coordinates of every image to zero,
/// chosen without replacement and independently per image.
pub fn zero_pixels(data: &Dataset, fraction: f64, seed: u64) -> Result<Dataset, DataError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(DataError::BadFraction(fraction));
    }
    let pixels = data.dim();
    let count = libm::floor(fraction * pixels as f64) as usize;
    let mut out = data.clone();
    if count == 0 {
        return Ok(out);
    }
    let mut r = rng::rng(seed);
    for mut row in out.inputs.rows_mut() {
        for i in index::sample(&mut r, pixels, count) {
            row[i] = 0.0;
        }
    }
    Ok(out)
}

/// Training set for adversarial initialization: optionally the clean data,
/// followed by `replication` copies with randomized labels and zeroed pixels.
pub fn poison(
    data: &Dataset,
    replication: usize,
    zero_fraction: f64,
    keep_original: bool,
    seed: u64,
) -> Result<Dataset, DataError> {
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    if keep_original {
        inputs.push(data.inputs.clone());
        labels.extend_from_slice(&data.labels);
    }
    for c in 0..replication {
        let relabelled = randomize_labels(data, rng::derive(seed, 2 * c as u64));
        let copy = zero_pixels(&relabelled, zero_fraction, rng::derive(seed, 2 * c as u64 + 1))?;
        inputs.push(copy.inputs);
        labels.extend(copy.labels);
    }
    let views: Vec<_> = inputs.iter().map(|a| a.view()).collect();
    let inputs = concatenate(Axis(0), &views).map_err(|_| DataError::Config("no pretraining patterns"))?;
    Ok(Dataset::new(inputs, labels, data.task)?)
}
