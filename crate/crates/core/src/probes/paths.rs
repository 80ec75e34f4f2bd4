use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::ProbeError;
use crate::geometry::{
    self, euclidean_distance, geodesic_distance, hamming_distance, network_geodesic, random_hamming_path,
    MidpointMode,
};
use crate::nn::{Dataset, Network};
use crate::symmetry::{align, align_raw, canonical_pair};
use crate::train::{batch_loss, sgd_train, Loss, TrainConfig};

/// A midpoint counts as a solution below this train error.
pub const SOLUTION_THRESHOLD: f64 = 0.01;

/// Default number of samples along a path.
pub const DEFAULT_POINTS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathMode {
    /// Straight line between the raw parameters.
    Linear,
    /// Straight line after aligning the second network to the first.
    LinearAligned,
    /// Geodesic between the normalized and aligned networks.
    GeodesicAligned,
    /// Random shortest Hamming path between raw binary networks.
    Hamming,
    /// Random shortest Hamming path after alignment.
    HammingAligned,
}

impl PathMode {
    pub fn name(self) -> &'static str {
        match self {
            PathMode::Linear => "linear",
            PathMode::LinearAligned => "linear-aligned",
            PathMode::GeodesicAligned => "geodesic-aligned",
            PathMode::Hamming => "hamming",
            PathMode::HammingAligned => "hamming-aligned",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.replace('_', "-").as_str() {
            "linear" => PathMode::Linear,
            "linear-aligned" => PathMode::LinearAligned,
            "geodesic-aligned" | "geodesic" => PathMode::GeodesicAligned,
            "hamming" => PathMode::Hamming,
            "hamming-aligned" => PathMode::HammingAligned,
            _ => return None,
        })
    }

    pub fn is_hamming(self) -> bool {
        matches!(self, PathMode::Hamming | PathMode::HammingAligned)
    }

    fn midpoint_mode(self) -> MidpointMode {
        match self {
            PathMode::Linear | PathMode::LinearAligned => MidpointMode::Linear,
            PathMode::GeodesicAligned => MidpointMode::Geodesic,
            PathMode::Hamming | PathMode::HammingAligned => MidpointMode::Hamming,
        }
    }
}

/// Train error sampled along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathScan {
    pub mode: PathMode,
    pub fractions: Vec<f64>,
    pub train_errors: Vec<f64>,
    pub losses: Option<Vec<f64>>,
    pub endpoints: [String; 2],
    /// Path length in the metric of the mode (Euclidean, geodesic or
    /// Hamming).
    pub length: f64,
}

impl PathScan {
    /// Same path walked from the other end.
    pub fn reversed(&self) -> PathScan {
        let mut out = self.clone();
        out.fractions = self.fractions.iter().rev().map(|x| 1.0 - x).collect();
        out.train_errors.reverse();
        if let Some(l) = out.losses.as_mut() {
            l.reverse();
        }
        out.endpoints = [self.endpoints[1].clone(), self.endpoints[0].clone()];
        out
    }
}

/// Highest sampled train error.
pub fn barrier(scan: &PathScan) -> f64 {
    scan.train_errors.iter().copied().fold(0.0, f64::max)
}

/// Applies the preprocessing of `mode` to an endpoint pair.
pub fn prepare_pair(a: &Network, b: &Network, mode: PathMode) -> Result<(Network, Network), ProbeError> {
    if !a.same_architecture(b) {
        return Err(ProbeError::ArchitectureMismatch);
    }
    let binary = a.is_binary();
    match mode {
        PathMode::Linear => Ok((a.clone(), b.clone())),
        PathMode::LinearAligned => Ok((a.clone(), align_raw(a, b)?.aligned)),
        PathMode::GeodesicAligned => {
            if binary {
                return Err(ProbeError::Config("geodesic paths need continuous networks"));
            }
            Ok(canonical_pair(a, b)?)
        }
        PathMode::Hamming | PathMode::HammingAligned => {
            if !binary {
                return Err(ProbeError::Config("Hamming paths need binary networks"));
            }
            if mode == PathMode::Hamming {
                Ok((a.clone(), b.clone()))
            } else {
                Ok((a.clone(), align(a, b)?.aligned))
            }
        }
    }
}

fn fractions(points: usize) -> Vec<f64> {
    (0..points).map(|i| i as f64 / (points - 1) as f64).collect()
}

/// Train error at `points` equispaced fractions (both endpoints included)
/// of the path of kind `mode` from `a` to `b`.
pub fn path_scan(
    a: &Network,
    b: &Network,
    data: &Dataset,
    mode: PathMode,
    points: usize,
    seed: u64,
) -> Result<PathScan, ProbeError> {
    path_scan_with_loss(a, b, data, mode, points, seed, None)
}

/// [`path_scan`], also recording the mean loss at every sample.
pub fn path_scan_with_loss(
    a: &Network,
    b: &Network,
    data: &Dataset,
    mode: PathMode,
    points: usize,
    seed: u64,
    loss: Option<Loss>,
) -> Result<PathScan, ProbeError> {
    if points < 2 {
        return Err(ProbeError::Config("a path scan needs at least two points"));
    }
    let (a, b) = prepare_pair(a, b, mode)?;
    let xs = fractions(points);
    let mut errors = Vec::with_capacity(points);
    let mut losses = loss.map(|_| Vec::with_capacity(points));
    let mut record = |net: &Network| -> Result<(), ProbeError> {
        errors.push(net.train_error(data)?);
        if let (Some(l), Some(kind)) = (losses.as_mut(), loss) {
            l.push(batch_loss(net, data.inputs.view(), &data.labels, kind)?);
        }
        Ok(())
    };
    let length = match mode {
        PathMode::Linear | PathMode::LinearAligned => {
            for &x in &xs {
                record(&geometry::linear_interpolate(&a, &b, x)?)?;
            }
            euclidean_distance(&a, &b)?
        }
        PathMode::GeodesicAligned => {
            for &x in &xs {
                record(&network_geodesic(&a, &b, x)?)?;
            }
            geodesic_distance(&a, &b)?
        }
        PathMode::Hamming | PathMode::HammingAligned => {
            let path = random_hamming_path(&a, &b, seed)?;
            let d = path.len();
            for &x in &xs {
                let k = libm::round(x * d as f64) as usize;
                record(&path.state(&a, &b, k))?;
            }
            hamming_distance(&a, &b)? as f64
        }
    };
    Ok(PathScan {
        mode,
        fractions: xs,
        train_errors: errors,
        losses,
        endpoints: ["A".to_string(), "B".to_string()],
        length,
    })
}

/// Two-segment path through a trained midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedPath {
    /// From the first endpoint to the optimized midpoint.
    pub first: PathScan,
    /// From the optimized midpoint to the second endpoint.
    pub second: PathScan,
    /// Highest train error along both segments.
    pub barrier: f64,
    pub midpoint: Network,
    pub midpoint_error: f64,
    /// How the midpoint was initialized before training.
    pub midpoint_init: MidpointMode,
    /// False when the endpoints coincide and no training was needed.
    pub trained: bool,
}

/// Single-bend path: canonicalize the endpoints according to `mode`, start
/// from their midpoint, train it to a solution, then scan the two segments
/// (the midpoint is re-canonicalized against each endpoint).
pub fn optimized_path(
    a: &Network,
    b: &Network,
    data: &Dataset,
    cfg: &TrainConfig,
    mode: PathMode,
    seed: u64,
    points: usize,
) -> Result<OptimizedPath, ProbeError> {
    let (a, b) = prepare_pair(a, b, mode)?;
    let init = mode.midpoint_mode();
    let same = a.params() == b.params();
    let (mid, trained) = if same {
        (a.clone(), false)
    } else {
        let start = geometry::midpoint(&a, &b, init, seed)?;
        let (m, _) = sgd_train(&start, data, None, cfg)?;
        (m, true)
    };
    let midpoint_error = mid.train_error(data)?;
    if midpoint_error >= SOLUTION_THRESHOLD {
        return Err(ProbeError::NonConvergence {
            achieved: midpoint_error,
        });
    }
    let mut first = path_scan(&a, &mid, data, mode, points, crate::rng::derive(seed, 1))?;
    first.endpoints = ["A".to_string(), "M".to_string()];
    let mut second = path_scan(&b, &mid, data, mode, points, crate::rng::derive(seed, 2))?.reversed();
    second.endpoints = ["M".to_string(), "B".to_string()];
    let barrier = barrier(&first).max(barrier(&second));
    Ok(OptimizedPath {
        first,
        second,
        barrier,
        midpoint: mid,
        midpoint_error,
        midpoint_init: init,
        trained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan(errors: &[f64]) -> PathScan {
        PathScan {
            mode: PathMode::Linear,
            fractions: fractions(errors.len()),
            train_errors: errors.to_vec(),
            losses: None,
            endpoints: ["A".to_string(), "B".to_string()],
            length: 1.0,
        }
    }

    #[test]
    fn barrier_is_the_max() {
        assert_eq!(barrier(&scan(&[0.0, 0.0, 0.0])), 0.0);
        assert_eq!(barrier(&scan(&[0.01, 0.37, 0.02])), 0.37);
        let s = scan(&[0.01, 0.2, 0.05, 0.0]);
        assert_eq!(barrier(&s), barrier(&s.reversed()));
    }

    #[test]
    fn reversed_fractions_increase() {
        let s = scan(&[0.1, 0.2, 0.3]).reversed();
        assert_eq!(s.fractions, [0.0, 0.5, 1.0]);
        assert_eq!(s.train_errors, [0.3, 0.2, 0.1]);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [
            PathMode::Linear,
            PathMode::LinearAligned,
            PathMode::GeodesicAligned,
            PathMode::Hamming,
            PathMode::HammingAligned,
        ] {
            assert_eq!(PathMode::parse(m.name()), Some(m));
        }
        assert_eq!(PathMode::parse("linear_aligned"), Some(PathMode::LinearAligned));
        assert_eq!(PathMode::parse("bogus"), None);
    }
}
