use alloc::vec::Vec;

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};

use super::{mean_std, ProbeError};
use crate::nn::{Dataset, Network};
use crate::rng;

/// How a configuration is perturbed when measuring its local energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PerturbMode {
    /// `w → w + σ z ⊙ w`, `z` standard Gaussian per parameter.
    Multiplicative,
    /// Sign flip of a random fraction `ε` of the trainable binary weights.
    Flip,
}

impl PerturbMode {
    pub fn for_network(net: &Network) -> Self {
        if net.is_binary() {
            PerturbMode::Flip
        } else {
            PerturbMode::Multiplicative
        }
    }

    pub fn default_samples(self) -> usize {
        match self {
            PerturbMode::Multiplicative => 100,
            PerturbMode::Flip => 10,
        }
    }

    /// `σ ∈ {0, 0.05, …, 0.5}` or `ε ∈ {0, 0.005, …, 0.05}`.
    pub fn default_amplitudes(self) -> Vec<f64> {
        let step = match self {
            PerturbMode::Multiplicative => 0.05,
            PerturbMode::Flip => 0.005,
        };
        (0..=10).map(|i| i as f64 * step).collect()
    }
}

/// Train-error increase under random perturbations, per amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalEnergyProfile {
    pub mode: PerturbMode,
    pub amplitudes: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub samples: usize,
    /// Train error of the unperturbed network.
    pub base_error: f64,
}

impl LocalEnergyProfile {
    /// Mean `δE` at the amplitude closest to `amplitude`.
    pub fn at(&self, amplitude: f64) -> f64 {
        let mut best = 0;
        for (i, a) in self.amplitudes.iter().enumerate() {
            if (a - amplitude).abs() < (self.amplitudes[best] - amplitude).abs() {
                best = i;
            }
        }
        self.mean[best]
    }
}

/// Mean and standard deviation of `E(perturbed) − E(w)` over `samples`
/// perturbations per amplitude. Zero amplitude gives exactly zero.
pub fn local_energy(
    net: &Network,
    data: &Dataset,
    amplitudes: &[f64],
    samples: usize,
    mode: PerturbMode,
    seed: u64,
) -> Result<LocalEnergyProfile, ProbeError> {
    if samples == 0 {
        return Err(ProbeError::Config("at least one perturbation sample is needed"));
    }
    match mode {
        PerturbMode::Flip if !net.is_binary() => {
            return Err(ProbeError::Config("flip perturbations need a binary network"))
        }
        PerturbMode::Multiplicative if net.is_binary() => {
            return Err(ProbeError::Config("multiplicative noise needs a continuous network"))
        }
        _ => {}
    }
    if amplitudes.iter().any(|a| !(*a >= 0.0) || (mode == PerturbMode::Flip && *a > 1.0)) {
        return Err(ProbeError::Config("invalid perturbation amplitude"));
    }
    let base = net.count_errors(data)?;
    let p = data.len() as f64;
    let mut means = Vec::with_capacity(amplitudes.len());
    let mut stds = Vec::with_capacity(amplitudes.len());
    for (ai, &amp) in amplitudes.iter().enumerate() {
        if amp == 0.0 {
            means.push(0.0);
            stds.push(0.0);
            continue;
        }
        let amp_seed = rng::derive(seed, ai as u64);
        let mut deltas = Vec::with_capacity(samples);
        for s in 0..samples {
            let mut r = rng::child(amp_seed, s as u64);
            let perturbed = match mode {
                PerturbMode::Multiplicative => multiplicative(net, amp, &mut r),
                PerturbMode::Flip => flip_fraction(net, amp, &mut r),
            };
            let errs = perturbed.count_errors(data)?;
            deltas.push((errs as f64 - base as f64) / p);
        }
        let (m, sd) = mean_std(&deltas);
        means.push(m);
        stds.push(sd);
    }
    Ok(LocalEnergyProfile {
        mode,
        amplitudes: amplitudes.to_vec(),
        mean: means,
        std: stds,
        samples,
        base_error: base as f64 / p,
    })
}

fn multiplicative(net: &Network, sigma: f64, r: &mut rng::Rng) -> Network {
    let mut out = net.clone();
    let sigma = sigma as f32;
    for layer in out.layers_mut() {
        if layer.spec.frozen {
            continue;
        }
        layer.weights.mapv_inplace(|w| {
            let z: f32 = StandardNormal.sample(r);
            w + sigma * z * w
        });
        if let Some(b) = layer.bias.as_mut() {
            b.mapv_inplace(|w| {
                let z: f32 = StandardNormal.sample(r);
                w + sigma * z * w
            });
        }
    }
    out
}

/// Flips `round(ε · n)` of the `n` trainable binary weights, chosen without
/// replacement.
fn flip_fraction(net: &Network, eps: f64, r: &mut rng::Rng) -> Network {
    let mut out = net.clone();
    let sizes: Vec<usize> = out
        .layers()
        .iter()
        .map(|l| if l.spec.frozen || !l.spec.weights_binary { 0 } else { l.weights.len() })
        .collect();
    let total: usize = sizes.iter().sum();
    let count = libm::round(eps * total as f64) as usize;
    if count == 0 {
        return out;
    }
    let mut picks = index::sample(r, total, count.min(total)).into_vec();
    picks.sort_unstable();
    let layers = out.layers_mut();
    let mut offset = 0;
    let mut li = 0;
    for idx in picks {
        while idx >= offset + sizes[li] {
            offset += sizes[li];
            li += 1;
        }
        let layer = &mut layers[li];
        let local = idx - offset;
        let cols = layer.weights.ncols();
        let (row, col) = (local / cols, local % cols);
        layer.weights[[row, col]] = -layer.weights[[row, col]];
        if let Some(l) = layer.latent.as_mut() {
            let v = l[[row, col]];
            l[[row, col]] = if v == 0.0 { -f32::MIN_POSITIVE } else { -v };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::hamming_distance;

    #[test]
    fn flip_count_is_exact() {
        let net = Network::committee(11, 5, &mut rng::rng(1)).unwrap();
        let flipped = flip_fraction(&net, 0.2, &mut rng::rng(2));
        // 55 trainable weights, the frozen output layer is untouched.
        assert_eq!(hamming_distance(&net, &flipped).unwrap(), 11);
        assert_eq!(flipped.layers()[1], net.layers()[1]);
        flipped.validate().unwrap();
    }

    #[test]
    fn default_grids() {
        let a = PerturbMode::Multiplicative.default_amplitudes();
        assert_eq!(a.len(), 11);
        assert_eq!(a[0], 0.0);
        assert!((a[10] - 0.5).abs() < 1e-12);
        assert!((PerturbMode::Flip.default_amplitudes()[10] - 0.05).abs() < 1e-12);
        assert_eq!(PerturbMode::Multiplicative.default_samples(), 100);
        assert_eq!(PerturbMode::Flip.default_samples(), 10);
    }
}
