//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use landscape_core::nn::Activation;
use landscape_core::symmetry::{PermutationPlan, UnitPermutation};
use landscape_core::rng;
use landscape_core::train::{backprop, Loss};
use landscape_core::{Network, Task};
use rand::seq::SliceRandom;
use rand::Rng;

/// Minimum total cost over all permutations (Heap's algorithm).
pub fn brute_force_min(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let total = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>();
    let mut best = total(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(total(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Layer parameters in `f64`, taken from a continuous network.
#[derive(Clone)]
pub struct RefLayer {
    pub w: Vec<Vec<f64>>,
    pub b: Option<Vec<f64>>,
    pub act: Activation,
}

pub fn ref_layers(net: &Network) -> Vec<RefLayer> {
    net.layers()
        .iter()
        .map(|l| RefLayer {
            w: l.weights.rows().into_iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect(),
            b: l.bias.as_ref().map(|b| b.iter().map(|&v| v as f64).collect()),
            act: l.spec.activation,
        })
        .collect()
}

pub fn ref_forward(layers: &[RefLayer], x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    for l in layers {
        a = l
            .w
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let z = row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>() + l.b.as_ref().map_or(0.0, |b| b[k]);
                match l.act {
                    Activation::Relu => z.max(0.0),
                    Activation::Linear => z,
                    Activation::Sign => {
                        if z >= 0.0 {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                }
            })
            .collect();
    }
    a
}

/// Smallest |pre-activation| of any hidden unit over the inputs.
pub fn min_hidden_margin(layers: &[RefLayer], xs: &[Vec<f64>]) -> f64 {
    let mut m = f64::INFINITY;
    for x in xs {
        let mut a = x.clone();
        for l in &layers[..layers.len() - 1] {
            let z: Vec<f64> = l
                .w
                .iter()
                .enumerate()
                .map(|(k, row)| row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>() + l.b.as_ref().map_or(0.0, |b| b[k]))
                .collect();
            m = z.iter().fold(m, |m, v| m.min(v.abs()));
            a = z.iter().map(|v| v.max(0.0)).collect();
        }
    }
    m
}

pub fn ref_loss(layers: &[RefLayer], xs: &[Vec<f64>], ys: &[i32], loss: Loss) -> f64 {
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let out = ref_forward(layers, x);
        total += match loss {
            Loss::BinaryCrossEntropy => {
                let m = -(y as f64) * out[0];
                if m > 0.0 {
                    m + (-m).exp().ln_1p()
                } else {
                    m.exp().ln_1p()
                }
            }
            Loss::CrossEntropy => {
                let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + out.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                lse - out[y as usize]
            }
        };
    }
    total / xs.len() as f64
}

/// Central finite differences of the mean loss, in the order of
/// [`Network::params`] (weights row-major, then bias, per layer).
pub fn fd_gradient(layers: &[RefLayer], xs: &[Vec<f64>], ys: &[i32], loss: Loss, h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut work = layers.to_vec();
    for li in 0..layers.len() {
        let rows = layers[li].w.len();
        let cols = layers[li].w[0].len();
        for r in 0..rows {
            for c in 0..cols {
                let v = layers[li].w[r][c];
                work[li].w[r][c] = v + h;
                let up = ref_loss(&work, xs, ys, loss);
                work[li].w[r][c] = v - h;
                let down = ref_loss(&work, xs, ys, loss);
                work[li].w[r][c] = v;
                out.push((up - down) / (2.0 * h));
            }
        }
        if let Some(b) = &layers[li].b {
            for k in 0..b.len() {
                let v = b[k];
                work[li].b.as_mut().unwrap()[k] = v + h;
                let up = ref_loss(&work, xs, ys, loss);
                work[li].b.as_mut().unwrap()[k] = v - h;
                let down = ref_loss(&work, xs, ys, loss);
                work[li].b.as_mut().unwrap()[k] = v;
                out.push((up - down) / (2.0 * h));
            }
        }
    }
    out
}

/// Random relabelling of every hidden layer; with `flips`, random signs too.
pub fn random_plan<R: Rng>(net: &Network, flips: bool, rng: &mut R) -> PermutationPlan {
    let layers = net.layers();
    PermutationPlan {
        layers: layers[..layers.len() - 1]
            .iter()
            .map(|l| {
                let n = l.spec.fan_out;
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(rng);
                let signs = (0..n)
                    .map(|_| if flips && rng.random_bool(0.5) { -1 } else { 1 })
                    .collect();
                UnitPermutation { perm, signs }
            })
            .collect(),
    }
}

pub fn random_inputs<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> ndarray::Array2<f32> {
    ndarray::Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0f32..1.0))
}

pub const FD_STEP: f64 = 1e-3;

/// `|g - fd| / max(|g|, |fd|, floor)`; the floor keeps coordinates whose
/// true gradient is zero from dividing f32 rounding noise by ~0.
pub fn rel_err(g: f64, fd: f64) -> f64 {
    (g - fd).abs() / g.abs().max(fd.abs()).max(1e-3)
}

/// Checks every coordinate on a batch whose hidden pre-activations stay
/// clear of the ReLU kink under ±FD_STEP perturbations (rows are redrawn until
/// they do).
pub fn gradient_check(widths: &[usize], bias: bool, task: Task, seed: u64) -> f64 {
    let mut r = rng::rng(seed);
    let net = Network::mlp(widths, false, bias, &mut r).unwrap();
    let reference = ref_layers(&net);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    while rows.len() < 8 {
        let row: Vec<f64> = (0..widths[0]).map(|_| r.random_range(-1.0f32..1.0) as f64).collect();
        if min_hidden_margin(&reference, std::slice::from_ref(&row)) > 0.02 {
            rows.push(row);
        }
    }
    let ys: Vec<i32> = (0..rows.len())
        .map(|_| match task {
            Task::Binary => {
                if r.random_bool(0.5) {
                    1
                } else {
                    -1
                }
            }
            Task::Classes(k) => r.random_range(0..k as i32),
        })
        .collect();
    let x = ndarray::Array2::from_shape_fn((rows.len(), widths[0]), |(i, j)| rows[i][j] as f32);
    let loss = Loss::for_task(task);
    let g = backprop(&net, x.view(), &ys, loss).unwrap().grad.flatten();
    let fd = fd_gradient(&reference, &rows, &ys, loss, FD_STEP);
    assert_eq!(g.len(), fd.len());
    g.iter().zip(&fd).map(|(&a, &b)| rel_err(a as f64, b)).fold(0.0, f64::max)
}
