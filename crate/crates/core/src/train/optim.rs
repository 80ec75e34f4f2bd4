use alloc::vec::Vec;

use ndarray::{Array1, Array2, Zip};

use super::Gradient;
use crate::nn::Network;

/// SGD with optional (Nesterov) momentum, using the convention
/// `v ← μ v + g`, step `g + μ v` (Nesterov) or `v` (classical).
#[derive(Debug, Clone)]
pub struct Optimizer {
    momentum: f32,
    nesterov: bool,
    velocity: Vec<(Array2<f32>, Option<Array1<f32>>)>,
}

impl Optimizer {
    pub fn new(net: &Network, momentum: f64, nesterov: bool) -> Self {
        let velocity = if momentum > 0.0 {
            net.layers()
                .iter()
                .map(|l| {
                    (
                        Array2::zeros(l.weights.dim()),
                        l.bias.as_ref().map(|b| Array1::zeros(b.len())),
                    )
                })
                .collect()
        } else {
            Vec::new()
        };
        Self {
            momentum: momentum as f32,
            nesterov,
            velocity,
        }
    }

    /// Applies one update. Binary layers move their latent weights, which
    /// are then clipped to `[-1, 1]` and re-binarized.
    pub fn step(&mut self, net: &mut Network, grad: &Gradient, lr: f32) {
        let mu = self.momentum;
        let nesterov = self.nesterov;
        for (i, layer) in net.layers_mut().iter_mut().enumerate() {
            if layer.spec.frozen {
                continue;
            }
            let g = &grad.layers[i];
            let binary = layer.latent.is_some();
            let w = layer.trainable_weights_mut();
            if self.velocity.is_empty() {
                w.zip_mut_with(&g.weights, |p, &d| *p -= lr * d);
                if let (Some(b), Some(gb)) = (layer.bias.as_mut(), g.bias.as_ref()) {
                    b.zip_mut_with(gb, |p, &d| *p -= lr * d);
                }
            } else {
                let (vw, vb) = &mut self.velocity[i];
                Zip::from(w).and(vw).and(&g.weights).for_each(|p, v, &d| {
                    *v = mu * *v + d;
                    *p -= lr * if nesterov { d + mu * *v } else { *v };
                });
                if let (Some(b), Some(vb), Some(gb)) = (layer.bias.as_mut(), vb.as_mut(), g.bias.as_ref()) {
                    Zip::from(b).and(vb).and(gb).for_each(|p, v, &d| {
                        *v = mu * *v + d;
                        *p -= lr * if nesterov { d + mu * *v } else { *v };
                    });
                }
            }
            if binary {
                layer
                    .trainable_weights_mut()
                    .mapv_inplace(|v| v.clamp(-1.0, 1.0));
                layer.rebinarize();
            }
        }
    }
}
