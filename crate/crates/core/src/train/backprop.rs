use alloc::vec::Vec;

use libm::{exp, log1p};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{Loss, TrainError};
use crate::nn::{Activation, Network, NnError, Task};

/// Gradient of one layer's trainable parameters. For binary layers the
/// weight gradient is taken with respect to the latent weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f32>,
    pub bias: Option<Array1<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<LayerGrad>,
}

impl Gradient {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weights: Array2::zeros(l.weights.dim()),
                    bias: l.bias.as_ref().map(|b| Array1::zeros(b.len())),
                })
                .collect(),
        }
    }

    /// Flattened in the same order as [`Network::params`].
    pub fn flatten(&self) -> Vec<f32> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.extend(g.weights.iter().copied());
            if let Some(b) = &g.bias {
                out.extend(b.iter().copied());
            }
        }
        out
    }
}

/// Result of one backward pass.
#[derive(Debug, Clone)]
pub struct BatchEval {
    pub grad: Gradient,
    /// Mean loss over the batch.
    pub loss: f64,
    /// Misclassified patterns in the batch (before the update).
    pub errors: usize,
}

#[inline]
fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + log1p(exp(-u))
    } else {
        log1p(exp(u))
    }
}

#[inline]
fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + exp(-u))
    } else {
        let e = exp(u);
        e / (1.0 + e)
    }
}

/// Checks that `loss` suits the network output and the labels.
pub fn check_loss(net: &Network, task: Task, loss: Loss) -> Result<(), TrainError> {
    let ok = match (loss, task) {
        (Loss::BinaryCrossEntropy, Task::Binary) => net.output_dim() == 1,
        (Loss::CrossEntropy, Task::Classes(k)) => net.output_dim() == k,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(TrainError::LossArity {
            loss,
            outputs: net.output_dim(),
        })
    }
}

/// Mean-loss gradient over a batch.
///
/// Sign activations and binary weights use the straight-through estimator:
/// `sign` acts as the identity in the backward pass, with the gradient
/// zeroed where the pre-activation (or latent weight) exceeds 1 in
/// magnitude. Frozen layers get a zero gradient.
pub fn backprop(
    net: &Network,
    inputs: ArrayView2<f32>,
    labels: &[i32],
    loss: Loss,
) -> Result<BatchEval, TrainError> {
    if inputs.ncols() != net.input_dim() {
        return Err(NnError::InputWidth {
            expected: net.input_dim(),
            got: inputs.ncols(),
        }
        .into());
    }
    if inputs.nrows() != labels.len() {
        return Err(NnError::LabelCount {
            rows: inputs.nrows(),
            labels: labels.len(),
        }
        .into());
    }
    let layers = net.layers();
    let batch = inputs.nrows();

    // Forward, keeping pre-activations and activations.
    let mut pre: Vec<Array2<f32>> = Vec::with_capacity(layers.len());
    let mut post: Vec<Array2<f32>> = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let z = if i == 0 {
            layer.preactivations(inputs)
        } else {
            layer.preactivations(post[i - 1].view())
        };
        let act = layer.spec.activation;
        let a = if act == Activation::Linear {
            z.clone()
        } else {
            z.mapv(|v| act.apply(v))
        };
        pre.push(z);
        post.push(a);
    }

    let logits = &post[layers.len() - 1];
    let mut dz = Array2::<f32>::zeros(logits.dim());
    let mut total = 0.0f64;
    let mut errors = 0usize;
    let inv_b = 1.0 / batch as f64;
    match loss {
        Loss::BinaryCrossEntropy => {
            if logits.ncols() != 1 {
                return Err(TrainError::LossArity {
                    loss,
                    outputs: logits.ncols(),
                });
            }
            for (i, &y) in labels.iter().enumerate() {
                let z = logits[[i, 0]] as f64;
                let y = y as f64;
                total += softplus(-y * z);
                dz[[i, 0]] = (-y * sigmoid(-y * z) * inv_b) as f32;
                if crate::nn::sign(logits[[i, 0]]) as f64 != y {
                    errors += 1;
                }
            }
        }
        Loss::CrossEntropy => {
            let k = logits.ncols();
            for (i, &y) in labels.iter().enumerate() {
                if y < 0 || y as usize >= k {
                    return Err(NnError::BadLabel { label: y }.into());
                }
                let row = logits.row(i);
                let mut best = 0usize;
                let mut max = row[0] as f64;
                for (j, &v) in row.iter().enumerate().skip(1) {
                    if (v as f64) > max {
                        max = v as f64;
                        best = j;
                    }
                }
                if best != y as usize {
                    errors += 1;
                }
                let sum: f64 = row.iter().map(|&v| exp(v as f64 - max)).sum();
                let log_z = max + libm::log(sum);
                total += log_z - row[y as usize] as f64;
                for j in 0..k {
                    let p = exp(row[j] as f64 - log_z);
                    let t = if j == y as usize { 1.0 } else { 0.0 };
                    dz[[i, j]] = ((p - t) * inv_b) as f32;
                }
            }
        }
    }
    let mean_loss = total * inv_b;
    if !mean_loss.is_finite() {
        return Err(TrainError::NonFiniteLoss);
    }

    let mut grads: Vec<LayerGrad> = Vec::with_capacity(layers.len());
    for i in (0..layers.len()).rev() {
        let layer = &layers[i];
        let scale = layer.spec.preact_scale();
        let input = if i == 0 { inputs } else { post[i - 1].view() };
        let grad = if layer.spec.frozen {
            LayerGrad {
                weights: Array2::zeros(layer.weights.dim()),
                bias: layer.bias.as_ref().map(|b| Array1::zeros(b.len())),
            }
        } else {
            let mut gw = dz.t().dot(&input);
            if scale != 1.0 {
                gw.mapv_inplace(|v| v * scale);
            }
            if let Some(latent) = &layer.latent {
                gw.zip_mut_with(latent, |g, &l| {
                    if l.abs() > 1.0 {
                        *g = 0.0;
                    }
                });
            }
            LayerGrad {
                weights: gw,
                bias: layer.bias.as_ref().map(|_| dz.sum_axis(Axis(0))),
            }
        };
        grads.push(grad);
        if i > 0 {
            let mut da = dz.dot(&layer.weights);
            if scale != 1.0 {
                da.mapv_inplace(|v| v * scale);
            }
            let z_prev = &pre[i - 1];
            match layers[i - 1].spec.activation {
                Activation::Relu => da.zip_mut_with(z_prev, |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }),
                Activation::Sign => da.zip_mut_with(z_prev, |d, &z| {
                    if z.abs() > 1.0 {
                        *d = 0.0;
                    }
                }),
                Activation::Linear => {}
            }
            dz = da;
        }
    }
    grads.reverse();
    Ok(BatchEval {
        grad: Gradient { layers: grads },
        loss: mean_loss,
        errors,
    })
}

/// Mean loss over a batch, without gradients.
pub fn batch_loss(
    net: &Network,
    inputs: ArrayView2<f32>,
    labels: &[i32],
    loss: Loss,
) -> Result<f64, TrainError> {
    Ok(backprop(net, inputs, labels, loss)?.loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Layer, LayerSpec};
    use ndarray::array;

    #[test]
    fn stationary_point_of_convex_problem() {
        // Two identical inputs with opposite labels: w = 0 is the minimizer.
        let spec = LayerSpec::dense(1, 1, Activation::Linear);
        let net = Network::new(alloc::vec![Layer::new(spec, array![[0.0]], None, None)]).unwrap();
        let x = array![[1.0f32], [1.0]];
        let eval = backprop(&net, x.view(), &[1, -1], Loss::BinaryCrossEntropy).unwrap();
        assert!(eval.grad.layers[0].weights[[0, 0]].abs() < 1e-6);
    }

    #[test]
    fn latent_beyond_one_gets_no_gradient() {
        let spec = LayerSpec::binary(2, 1, Activation::Linear);
        let latent = array![[2.5f32, 0.3]];
        let net = Network::new(alloc::vec![Layer::new(spec, Array2::zeros((1, 2)), None, Some(latent))])
            .unwrap();
        let x = array![[1.0f32, 1.0]];
        let eval = backprop(&net, x.view(), &[-1], Loss::BinaryCrossEntropy).unwrap();
        assert_eq!(eval.grad.layers[0].weights[[0, 0]], 0.0);
        assert!(eval.grad.layers[0].weights[[0, 1]] != 0.0);
    }

    #[test]
    fn loss_arity_is_checked() {
        let spec = LayerSpec::dense(2, 3, Activation::Linear);
        let net = Network::new(alloc::vec![Layer::new(spec, Array2::zeros((3, 2)), None, None)]).unwrap();
        assert!(check_loss(&net, Task::Binary, Loss::BinaryCrossEntropy).is_err());
        assert!(check_loss(&net, Task::Classes(3), Loss::CrossEntropy).is_ok());
    }
}
