use alloc::vec::Vec;

use ndarray::Array2;

use super::ProbeError;
use crate::nn::{Dataset, Network};
use crate::symmetry::normalize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneOptions {
    /// Grid points per axis.
    pub resolution: usize,
    /// Extra room around the anchor triangle, as a fraction of its extent
    /// along each axis.
    pub margin: f64,
    /// Re-normalize every grid point onto the product of spheres.
    pub normalized: bool,
    /// Evaluate grid points after taking the sign of the (latent) weights.
    pub binarized: bool,
}

/// Train error on the 2-D section through three parameter vectors.
///
/// Grid point `(i, j)` is `origin + alphas[i] u + betas[j] v`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneGrid {
    pub origin: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// In-plane coordinates of the three anchors.
    pub anchors: [(f64, f64); 3],
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// `errors[[i, j]]` at `(alphas[i], betas[j])`.
    pub errors: Array2<f64>,
    pub normalized: bool,
    pub binarized: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl PlaneGrid {
    /// Parameter vector at in-plane coordinates `(alpha, beta)`.
    pub fn point(&self, alpha: f64, beta: f64) -> Vec<f32> {
        self.origin
            .iter()
            .zip(&self.u)
            .zip(&self.v)
            .map(|((o, u), v)| (o + alpha * u + beta * v) as f32)
            .collect()
    }

    /// Network at `(alpha, beta)`, built like the grid points.
    pub fn network_at(&self, template: &Network, alpha: f64, beta: f64) -> Result<Network, ProbeError> {
        let net = template.with_params(&self.point(alpha, beta))?;
        if self.normalized {
            Ok(normalize(&net)?)
        } else {
            Ok(net)
        }
    }

    /// Grid indices of the cell nearest to anchor `k`.
    pub fn nearest_cell(&self, k: usize) -> (usize, usize) {
        let (a, b) = self.anchors[k];
        let nearest = |axis: &[f64], x: f64| {
            let mut best = 0;
            for (i, v) in axis.iter().enumerate() {
                if (v - x).abs() < (axis[best] - x).abs() {
                    best = i;
                }
            }
            best
        };
        (nearest(&self.alphas, a), nearest(&self.betas, b))
    }

    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Gram-Schmidt plane through `w1, w2, w3`: `u ∝ w2 − w1`, `v ∝` the part of
/// `w3 − w1` orthogonal to `u`. The grid covers the anchors' bounding box
/// widened by `margin`.
pub fn plane_scan(
    w1: &Network,
    w2: &Network,
    w3: &Network,
    data: &Dataset,
    opts: &PlaneOptions,
) -> Result<PlaneGrid, ProbeError> {
    if !w1.same_architecture(w2) || !w1.same_architecture(w3) {
        return Err(ProbeError::ArchitectureMismatch);
    }
    if opts.resolution < 2 {
        return Err(ProbeError::Config("plane resolution must be at least 2"));
    }
    let binary = w1.is_binary();
    if opts.binarized != binary {
        return Err(ProbeError::Config(
            "binarized planes need binary networks with latent weights, and binary networks are always binarized",
        ));
    }
    if opts.normalized && binary {
        return Err(ProbeError::Config("normalized planes need continuous networks"));
    }
    let to64 = |n: &Network| n.params().iter().map(|&v| v as f64).collect::<Vec<f64>>();
    let (p1, p2, p3) = (to64(w1), to64(w2), to64(w3));
    let d2: Vec<f64> = p2.iter().zip(&p1).map(|(a, b)| a - b).collect();
    let d3: Vec<f64> = p3.iter().zip(&p1).map(|(a, b)| a - b).collect();
    let len2 = libm::sqrt(dot(&d2, &d2));
    let scale = libm::sqrt(dot(&p1, &p1)).max(1.0);
    if len2 <= 1e-9 * scale {
        return Err(ProbeError::DegeneratePlane);
    }
    let u: Vec<f64> = d2.iter().map(|x| x / len2).collect();
    let a3 = dot(&d3, &u);
    let r: Vec<f64> = d3.iter().zip(&u).map(|(x, y)| x - a3 * y).collect();
    let b3 = libm::sqrt(dot(&r, &r));
    if b3 <= 1e-9 * scale {
        return Err(ProbeError::DegeneratePlane);
    }
    let v: Vec<f64> = r.iter().map(|x| x / b3).collect();
    let anchors = [(0.0, 0.0), (len2, 0.0), (a3, b3)];

    let axis = |lo: f64, hi: f64| {
        let span = hi - lo;
        let (lo, hi) = (lo - opts.margin * span, hi + opts.margin * span);
        (0..opts.resolution)
            .map(|i| lo + (hi - lo) * i as f64 / (opts.resolution - 1) as f64)
            .collect::<Vec<f64>>()
    };
    let alphas = axis(0.0f64.min(a3), len2.max(a3));
    let betas = axis(0.0, b3);

    let mut grid = PlaneGrid {
        origin: p1,
        u,
        v,
        anchors,
        alphas,
        betas,
        errors: Array2::zeros((opts.resolution, opts.resolution)),
        normalized: opts.normalized,
        binarized: opts.binarized,
    };
    for i in 0..opts.resolution {
        for j in 0..opts.resolution {
            let net = grid.network_at(w1, grid.alphas[i], grid.betas[j])?;
            grid.errors[[i, j]] = net.train_error(data)?;
        }
    }
    Ok(grid)
}
