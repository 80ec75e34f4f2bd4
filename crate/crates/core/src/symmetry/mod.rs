//! Removal of the rescaling, permutation and sign-reversal symmetries.
//!
//! [`normalize`] puts every hidden ReLU unit on its unit sphere and the last
//! layer on the sphere of radius `√H^L`. [`align`] then permutes (and, for
//! sign activations, flips) the hidden units of a second network so that
//! they match a reference network layer by layer, bottom-up.

mod assignment;

use alloc::vec::Vec;

use ndarray::{Array1, Array2, Axis};

pub use assignment::{solve_assignment, AssignmentError, CostMatrix};

use crate::nn::{Activation, Network, NnError};

/// Tolerance on unit norms when checking that a network is normalized.
pub const NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SymmetryError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error("layer {layer}, unit {unit} has zero incoming norm")]
    DegenerateUnit { layer: usize, unit: usize },
    #[error("normalization needs a continuous network with ReLU hidden units")]
    NotRelu,
    #[error("networks have different architectures")]
    ArchitectureMismatch,
    #[error("network is not normalized (layer {layer})")]
    NotNormalized { layer: usize },
    #[error("mixing binary and continuous networks")]
    MixedKinds,
    #[error("plan does not fit the network")]
    PlanMismatch,
}

/// Per layer, the Euclidean norm of every unit's incoming weight row.
pub type UnitNorms = Vec<Vec<f64>>;

pub fn unit_norms(net: &Network) -> UnitNorms {
    net.layers().iter().map(|l| row_norms(&l.weights)).collect()
}

fn row_norms(w: &Array2<f32>) -> Vec<f64> {
    w.rows()
        .into_iter()
        .map(|r| libm::sqrt(r.iter().map(|&v| v as f64 * v as f64).sum()))
        .collect()
}

fn frobenius(w: &Array2<f32>) -> f64 {
    libm::sqrt(w.iter().map(|&v| v as f64 * v as f64).sum())
}

/// Radius of the last layer's sphere, `√H^L`.
pub fn last_layer_radius(net: &Network) -> f64 {
    libm::sqrt(net.output_dim() as f64)
}

fn check_relu(net: &Network) -> Result<(), SymmetryError> {
    let layers = net.layers();
    let hidden_ok = layers[..layers.len() - 1]
        .iter()
        .all(|l| l.spec.activation == Activation::Relu);
    if net.is_binary() || !hidden_ok {
        return Err(SymmetryError::NotRelu);
    }
    Ok(())
}

/// Rescales every hidden unit to unit incoming norm (compensating in the
/// next layer's outgoing weights), then scales the whole last layer to
/// Frobenius norm `√H^L`. Predictions are unchanged.
pub fn normalize(net: &Network) -> Result<Network, SymmetryError> {
    check_relu(net)?;
    let mut out = net.clone();
    let layers = out.layers_mut();
    let last = layers.len() - 1;
    for li in 0..last {
        let norms = row_norms(&layers[li].weights);
        if let Some(unit) = norms.iter().position(|&n| !(n > 0.0)) {
            return Err(SymmetryError::DegenerateUnit { layer: li, unit });
        }
        let (lower, upper) = layers.split_at_mut(li + 1);
        let layer = &mut lower[li];
        for (k, mut row) in layer.weights.rows_mut().into_iter().enumerate() {
            let inv = (1.0 / norms[k]) as f32;
            row.mapv_inplace(|v| v * inv);
        }
        if let Some(b) = layer.bias.as_mut() {
            for (k, v) in b.iter_mut().enumerate() {
                *v = (*v as f64 / norms[k]) as f32;
            }
        }
        let next = &mut upper[0];
        for (k, mut col) in next.weights.columns_mut().into_iter().enumerate() {
            let s = norms[k] as f32;
            col.mapv_inplace(|v| v * s);
        }
    }
    let layer = &mut layers[last];
    let norm = frobenius(&layer.weights);
    if !(norm > 0.0) {
        return Err(SymmetryError::DegenerateUnit { layer: last, unit: 0 });
    }
    let s = (libm::sqrt(layer.spec.fan_out as f64) / norm) as f32;
    layer.weights.mapv_inplace(|v| v * s);
    if let Some(b) = layer.bias.as_mut() {
        b.mapv_inplace(|v| v * s);
    }
    Ok(out)
}

/// True when hidden units have unit norm and the last layer norm `√H^L`,
/// each within `tol` (relative for the last layer).
pub fn is_normalized(net: &Network, tol: f64) -> bool {
    first_unnormalized_layer(net, tol).is_none()
}

fn first_unnormalized_layer(net: &Network, tol: f64) -> Option<usize> {
    let layers = net.layers();
    let last = layers.len() - 1;
    for (li, layer) in layers[..last].iter().enumerate() {
        if row_norms(&layer.weights).iter().any(|n| (n - 1.0).abs() > tol) {
            return Some(li);
        }
    }
    let radius = last_layer_radius(net);
    if (frobenius(&layers[last].weights) - radius).abs() > tol * radius.max(1.0) {
        return Some(last);
    }
    None
}

/// Unit relabelling of one hidden layer: new unit `k` is old unit `perm[k]`
/// multiplied by `signs[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitPermutation {
    pub perm: Vec<usize>,
    pub signs: Vec<i8>,
}

impl UnitPermutation {
    pub fn identity(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
            signs: alloc::vec![1; n],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &p)| i == p) && self.signs.iter().all(|&s| s == 1)
    }

    pub fn inverse(&self) -> Self {
        let n = self.perm.len();
        let mut perm = alloc::vec![0; n];
        let mut signs = alloc::vec![1; n];
        for (k, &p) in self.perm.iter().enumerate() {
            perm[p] = k;
            signs[p] = self.signs[k];
        }
        Self { perm, signs }
    }
}

/// One [`UnitPermutation`] per hidden layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationPlan {
    pub layers: Vec<UnitPermutation>,
}

impl PermutationPlan {
    pub fn identity(net: &Network) -> Self {
        let layers = net.layers();
        Self {
            layers: layers[..layers.len() - 1]
                .iter()
                .map(|l| UnitPermutation::identity(l.spec.fan_out))
                .collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.layers.iter().all(UnitPermutation::is_identity)
    }

    pub fn inverse(&self) -> Self {
        Self {
            layers: self.layers.iter().map(UnitPermutation::inverse).collect(),
        }
    }

    pub fn apply(&self, net: &Network) -> Result<Network, SymmetryError> {
        let hidden = net.layers().len() - 1;
        if self.layers.len() != hidden {
            return Err(SymmetryError::PlanMismatch);
        }
        let mut out = net.clone();
        for (li, up) in self.layers.iter().enumerate() {
            if up.perm.len() != net.layers()[li].spec.fan_out || up.signs.len() != up.perm.len() {
                return Err(SymmetryError::PlanMismatch);
            }
            permute_units(&mut out, li, up);
        }
        Ok(out)
    }
}

/// Flips a latent weight so that its sign flips too (`sign(0) = +1`).
#[inline]
fn negate_latent(v: f32) -> f32 {
    if v == 0.0 {
        -f32::MIN_POSITIVE
    } else {
        -v
    }
}

fn permute_rows(m: &Array2<f32>, up: &UnitPermutation, latent: bool) -> Array2<f32> {
    let mut out = m.select(Axis(0), &up.perm);
    for (k, mut row) in out.rows_mut().into_iter().enumerate() {
        if up.signs[k] < 0 {
            if latent {
                row.mapv_inplace(negate_latent);
            } else {
                row.mapv_inplace(|v| -v);
            }
        }
    }
    out
}

fn permute_cols(m: &Array2<f32>, up: &UnitPermutation, latent: bool) -> Array2<f32> {
    // Column selection may come back in column-major order.
    let mut out = m.select(Axis(1), &up.perm).as_standard_layout().into_owned();
    for (k, mut col) in out.columns_mut().into_iter().enumerate() {
        if up.signs[k] < 0 {
            if latent {
                col.mapv_inplace(negate_latent);
            } else {
                col.mapv_inplace(|v| -v);
            }
        }
    }
    out
}

/// Applies `up` to the units of hidden layer `li`: rows (and biases) of
/// layer `li`, columns of layer `li + 1`.
fn permute_units(net: &mut Network, li: usize, up: &UnitPermutation) {
    let layers = net.layers_mut();
    {
        let layer = &mut layers[li];
        layer.weights = permute_rows(&layer.weights, up, false);
        if let Some(l) = &layer.latent {
            layer.latent = Some(permute_rows(l, up, true));
        }
        if let Some(b) = &layer.bias {
            let mut nb: Array1<f32> = b.select(Axis(0), &up.perm);
            for (k, v) in nb.iter_mut().enumerate() {
                if up.signs[k] < 0 {
                    *v = -*v;
                }
            }
            layer.bias = Some(nb);
        }
    }
    let next = &mut layers[li + 1];
    next.weights = permute_cols(&next.weights, up, false);
    if let Some(l) = &next.latent {
        next.latent = Some(permute_cols(l, up, true));
    }
}

/// Result of [`align`].
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// `net_b` after relabelling.
    pub aligned: Network,
    /// Plan taking `net_b` to `aligned`.
    pub plan: PermutationPlan,
}

/// Aligns `net_b` to `net_a`. Continuous networks must be normalized first.
pub fn align(net_a: &Network, net_b: &Network) -> Result<Alignment, SymmetryError> {
    if !net_a.is_binary() {
        for net in [net_a, net_b] {
            if let Some(layer) = first_unnormalized_layer(net, NORM_TOLERANCE) {
                return Err(SymmetryError::NotNormalized { layer });
            }
        }
    }
    align_raw(net_a, net_b)
}

/// Alignment without the normalization precondition. The matching still
/// maximizes cosine similarity, so it only depends on weight directions.
///
/// For each hidden layer, bottom-up: the cost of pairing unit `j` of `a`
/// with unit `k` of `b` is `-cos(w_j^a, w_k^b)` (continuous) or
/// `-|w_j^a · w_k^b|` (binary, `-w_j^a · w_k^b` when the next layer is
/// frozen and signs cannot flip); the optimal assignment relabels `b`.
/// Binary units whose matched weights are anti-correlated are then
/// sign-flipped when allowed.
pub fn align_raw(net_a: &Network, net_b: &Network) -> Result<Alignment, SymmetryError> {
    if !net_a.same_architecture(net_b) {
        return Err(SymmetryError::ArchitectureMismatch);
    }
    let binary = net_a.is_binary();
    let hidden = net_a.layers().len() - 1;
    let mut aligned = net_b.clone();
    let mut plan = Vec::with_capacity(hidden);
    for li in 0..hidden {
        let wa = &net_a.layers()[li].weights;
        let wb = aligned.layers()[li].weights.clone();
        let dots: Array2<f64> = wa.mapv(|v| v as f64).dot(&wb.mapv(|v| v as f64).t());
        let n = dots.nrows();
        let flip_allowed = binary
            && net_a.layers()[li].spec.activation == Activation::Sign
            && !net_a.layers()[li + 1].spec.frozen;
        let cost = if flip_allowed {
            CostMatrix::from_fn(n, |j, k| -libm::fabs(dots[[j, k]]))?
        } else if binary {
            CostMatrix::from_fn(n, |j, k| -dots[[j, k]])?
        } else {
            let na = row_norms(wa);
            let nb = row_norms(&wb);
            CostMatrix::from_fn(n, |j, k| {
                let denom = na[j] * nb[k];
                if denom > 0.0 {
                    -dots[[j, k]] / denom
                } else {
                    0.0
                }
            })?
        };
        let perm = solve_assignment(&cost);
        let signs = perm
            .iter()
            .enumerate()
            .map(|(j, &k)| if flip_allowed && dots[[j, k]] < 0.0 { -1 } else { 1 })
            .collect();
        let up = UnitPermutation { perm, signs };
        permute_units(&mut aligned, li, &up);
        plan.push(up);
    }
    Ok(Alignment {
        aligned,
        plan: PermutationPlan { layers: plan },
    })
}

/// Normalizes both networks and aligns the second to the first.
pub fn canonical_pair(net_a: &Network, net_b: &Network) -> Result<(Network, Network), SymmetryError> {
    if net_a.is_binary() != net_b.is_binary() {
        return Err(SymmetryError::MixedKinds);
    }
    if net_a.is_binary() {
        let b = align(net_a, net_b)?.aligned;
        return Ok((net_a.clone(), b));
    }
    let a = normalize(net_a)?;
    let b = normalize(net_b)?;
    let b = align(&a, &b)?.aligned;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Layer, LayerSpec};
    use crate::rng;
    use ndarray::array;

    #[test]
    fn unit_rescaled_and_outgoing_compensated() {
        let l1 = Layer::new(
            LayerSpec::dense(2, 1, Activation::Relu),
            array![[3.0, 4.0]],
            None,
            None,
        );
        let l2 = Layer::new(
            LayerSpec::dense(1, 2, Activation::Linear),
            array![[1.0], [2.0]],
            None,
            None,
        );
        let net = Network::new(alloc::vec![l1, l2]).unwrap();
        let out = normalize(&net).unwrap();
        let w1 = &out.layers()[0].weights;
        assert!((w1[[0, 0]] - 0.6).abs() < 1e-7 && (w1[[0, 1]] - 0.8).abs() < 1e-7);
        // Outgoing column ×5 then the last layer is scaled to norm √2.
        let w2 = &out.layers()[1].weights;
        let ratio = w2[[1, 0]] / w2[[0, 0]];
        assert!((ratio - 2.0).abs() < 1e-6);
        assert!((frobenius(w2) - libm::sqrt(2.0)).abs() < 1e-6);
    }

    #[test]
    fn zero_norm_unit_is_rejected() {
        let l1 = Layer::new(
            LayerSpec::dense(2, 2, Activation::Relu),
            array![[1.0, 0.0], [0.0, 0.0]],
            None,
            None,
        );
        let l2 = Layer::new(LayerSpec::dense(2, 1, Activation::Linear), array![[1.0, 1.0]], None, None);
        let net = Network::new(alloc::vec![l1, l2]).unwrap();
        assert_eq!(
            normalize(&net).unwrap_err(),
            SymmetryError::DegenerateUnit { layer: 0, unit: 1 }
        );
    }

    #[test]
    fn binary_networks_cannot_be_normalized() {
        let net = Network::mlp(&[3, 4, 1], true, false, &mut rng::rng(0)).unwrap();
        assert_eq!(normalize(&net).unwrap_err(), SymmetryError::NotRelu);
    }

    #[test]
    fn align_checks_normalization() {
        let net = Network::mlp(&[3, 4, 2], false, false, &mut rng::rng(0)).unwrap();
        assert!(matches!(align(&net, &net), Err(SymmetryError::NotNormalized { .. })));
        let n = normalize(&net).unwrap();
        assert!(align(&n, &n).unwrap().plan.is_identity());
    }

    #[test]
    fn plan_inverse_restores() {
        let net = Network::mlp(&[3, 5, 4, 2], true, true, &mut rng::rng(2)).unwrap();
        let up0 = UnitPermutation {
            perm: alloc::vec![2, 0, 4, 1, 3],
            signs: alloc::vec![1, -1, -1, 1, 1],
        };
        let up1 = UnitPermutation {
            perm: alloc::vec![3, 2, 1, 0],
            signs: alloc::vec![-1, 1, 1, -1],
        };
        let plan = PermutationPlan {
            layers: alloc::vec![up0, up1],
        };
        let moved = plan.apply(&net).unwrap();
        assert_ne!(moved, net);
        assert_eq!(plan.inverse().apply(&moved).unwrap(), net);
    }
}
