//! Landscape measurements around and between solutions.

mod distances;
mod energy;
mod paths;
mod plane;

use alloc::vec::Vec;

pub use distances::{distance_study, pair_distances, DistanceRow, SolutionGroup};
pub use energy::{local_energy, LocalEnergyProfile, PerturbMode};
pub use paths::{
    barrier, optimized_path, path_scan, path_scan_with_loss, prepare_pair, OptimizedPath, PathMode, PathScan,
    DEFAULT_POINTS, SOLUTION_THRESHOLD,
};
pub use plane::{plane_scan, PlaneGrid, PlaneOptions};

use crate::geometry::GeometryError;
use crate::nn::NnError;
use crate::symmetry::SymmetryError;
use crate::train::TrainError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProbeError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{0}")]
    Config(&'static str),
    #[error("networks have different architectures")]
    ArchitectureMismatch,
    #[error("midpoint training stopped at train error {achieved}")]
    NonConvergence { achieved: f64 },
    #[error("anchors are collinear")]
    DegeneratePlane,
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(core::cmp::Ordering::Equal));
        let mut r = alloc::vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, _) = mean_std(&rx);
    let (my, _) = mean_std(&ry);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / libm::sqrt(vx * vy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_std() {
        assert_eq!(mean_std(&[]), (0.0, 0.0));
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - 1.290_994_448_735_805_6).abs() < 1e-12);
    }

    #[test]
    fn spearman_extremes() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert_eq!(spearman(&[0.1, 0.5, 0.2], &[0.01, 0.3, 0.02]), 1.0);
    }
}
