//! Feedforward network container and evaluation.
//!
//! A [`Network`] is an ordered stack of dense layers. Weight matrices are
//! stored `fan_out × fan_in`, so row `k` of a layer holds the incoming weights
//! of unit `k`. Binary layers keep their continuous latent weights alongside
//! the `±1` weights actually used by the forward pass.
//!
//! Binary layers divide their pre-activations by `√fan_in`. The sign
//! activation and the final sign/argmax are invariant under that positive
//! factor, so it only conditions the training gradients.

use alloc::vec::Vec;

use libm::sqrtf;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

/// Rows evaluated per forward chunk when scoring a whole dataset.
const EVAL_CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("input width {got} does not match first-layer fan_in {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("layer {layer}: fan_in {got} does not match previous fan_out {expected}")]
    LayerChain { layer: usize, expected: usize, got: usize },
    #[error("layer {layer}: parameter shape does not match its spec")]
    ParamShape { layer: usize },
    #[error("the last layer must use the linear activation")]
    LastLayerNotLinear,
    #[error("a network needs at least one layer")]
    Empty,
    #[error("layer {layer} holds non-finite parameters")]
    NonFinite { layer: usize },
    #[error("layer {layer} is binary but has no latent weights")]
    MissingLatent { layer: usize },
    #[error("layer {layer}: binary weights are not the signs of the latent weights")]
    LatentMismatch { layer: usize },
    #[error("dataset has {labels} labels for {rows} input rows")]
    LabelCount { rows: usize, labels: usize },
    #[error("label {label} is not valid for this task")]
    BadLabel { label: i32 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("network has {outputs} outputs but the task needs {expected}")]
    OutputArity { outputs: usize, expected: usize },
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamLength { expected: usize, got: usize },
    #[error("networks have different architectures")]
    ArchitectureMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sign,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Sign => sign(x),
            Activation::Linear => x,
        }
    }
}

/// `sign` with the convention `sign(0) = +1`.
#[inline]
pub fn sign(x: f32) -> f32 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
    pub has_bias: bool,
    pub weights_binary: bool,
    /// Frozen layers are never updated by the trainers (committee machine
    /// output layer).
    pub frozen: bool,
}

impl LayerSpec {
    pub fn dense(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        Self {
            fan_in,
            fan_out,
            activation,
            has_bias: false,
            weights_binary: false,
            frozen: false,
        }
    }

    pub fn binary(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        Self {
            weights_binary: true,
            ..Self::dense(fan_in, fan_out, activation)
        }
    }

    pub fn with_bias(mut self, has_bias: bool) -> Self {
        self.has_bias = has_bias;
        self
    }

    pub fn frozen(mut self, frozen: bool) -> Self {
        self.frozen = frozen;
        self
    }

    /// Factor applied to the pre-activations of this layer: binary layers
    /// feeding a sign activation see `1/sqrt(fan_in)` so that the
    /// straight-through window `|z| <= 1` is not empty.
    #[inline]
    pub fn preact_scale(&self) -> f32 {
        if self.weights_binary && self.activation == Activation::Sign {
            1.0 / sqrtf(self.fan_in as f32)
        } else {
            1.0
        }
    }

    /// Trainable parameter count (latent weights for binary layers).
    pub fn num_params(&self) -> usize {
        self.fan_in * self.fan_out + if self.has_bias { self.fan_out } else { 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weights: Array2<f32>,
    pub bias: Option<Array1<f32>>,
    pub latent: Option<Array2<f32>>,
}

impl Layer {
    /// Builds a layer from explicit parameters. Binary layers derive their
    /// weights from `latent` when given, otherwise from `weights`.
    pub fn new(
        spec: LayerSpec,
        weights: Array2<f32>,
        bias: Option<Array1<f32>>,
        latent: Option<Array2<f32>>,
    ) -> Self {
        let weights = match (&latent, spec.weights_binary) {
            (Some(l), true) => l.mapv(sign),
            _ => weights,
        };
        Self {
            spec,
            weights,
            bias,
            latent,
        }
    }

    /// Random initialization: continuous weights uniform in `±√(6/fan_in)`,
    /// binary latent weights uniform in `[-1, 1]`. Biases start at zero.
    pub fn init<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Self {
        let shape = (spec.fan_out, spec.fan_in);
        let bias = spec.has_bias.then(|| Array1::zeros(spec.fan_out));
        if spec.weights_binary {
            let latent = Array2::from_shape_simple_fn(shape, || rng.random_range(-1.0f32..=1.0));
            let weights = latent.mapv(sign);
            Self {
                spec,
                weights,
                bias,
                latent: Some(latent),
            }
        } else {
            let limit = sqrtf(6.0 / spec.fan_in as f32);
            let weights = Array2::from_shape_simple_fn(shape, || rng.random_range(-limit..=limit));
            Self {
                spec,
                weights,
                bias,
                latent: None,
            }
        }
    }

    /// Pre-activations for a batch (`batch × fan_out`).
    pub fn preactivations(&self, x: ArrayView2<f32>) -> Array2<f32> {
        let mut z = x.dot(&self.weights.t());
        let scale = self.spec.preact_scale();
        if scale != 1.0 {
            z.mapv_inplace(|v| v * scale);
        }
        if let Some(b) = &self.bias {
            z += b;
        }
        z
    }

    /// The parameters the trainers move: latent weights for binary layers.
    pub fn trainable_weights(&self) -> &Array2<f32> {
        self.latent.as_ref().unwrap_or(&self.weights)
    }

    pub fn trainable_weights_mut(&mut self) -> &mut Array2<f32> {
        self.latent.as_mut().unwrap_or(&mut self.weights)
    }

    /// Re-derives the `±1` weights from the latent ones.
    pub fn rebinarize(&mut self) {
        if let Some(l) = &self.latent {
            self.weights.zip_mut_with(l, |w, &v| *w = sign(v));
        }
    }

    fn validate(&self, index: usize) -> Result<(), NnError> {
        let spec = &self.spec;
        if self.weights.dim() != (spec.fan_out, spec.fan_in) {
            return Err(NnError::ParamShape { layer: index });
        }
        match &self.bias {
            Some(b) if !spec.has_bias || b.len() != spec.fan_out => {
                return Err(NnError::ParamShape { layer: index })
            }
            None if spec.has_bias => return Err(NnError::ParamShape { layer: index }),
            _ => {}
        }
        let finite = self.weights.iter().all(|v| v.is_finite())
            && self.bias.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(NnError::NonFinite { layer: index });
        }
        if spec.weights_binary {
            let latent = self
                .latent
                .as_ref()
                .ok_or(NnError::MissingLatent { layer: index })?;
            if latent.dim() != self.weights.dim() {
                return Err(NnError::ParamShape { layer: index });
            }
            if latent.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite { layer: index });
            }
            if self.weights.iter().zip(latent).any(|(&w, &l)| w != sign(l)) {
                return Err(NnError::LatentMismatch { layer: index });
            }
        } else if self.latent.is_some() {
            return Err(NnError::ParamShape { layer: index });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self, NnError> {
        let net = Self { layers };
        net.validate()?;
        Ok(net)
    }

    pub fn init<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self, NnError> {
        Self::new(specs.iter().map(|&s| Layer::init(s, rng)).collect())
    }

    /// Fully-connected network with the given widths (`widths[0]` is the input
    /// dimension). Hidden layers use ReLU (continuous) or sign (binary).
    pub fn mlp<R: Rng + ?Sized>(
        widths: &[usize],
        binary: bool,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        Self::init(&mlp_specs(widths, binary, bias), rng)
    }

    /// Binary perceptron with a single output.
    pub fn perceptron<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self, NnError> {
        Self::mlp(&[n, 1], true, false, rng)
    }

    /// Binary committee machine: `hidden` sign units whose outputs are summed
    /// by a frozen all-ones output layer.
    pub fn committee<R: Rng + ?Sized>(n: usize, hidden: usize, rng: &mut R) -> Result<Self, NnError> {
        let first = Layer::init(LayerSpec::binary(n, hidden, Activation::Sign), rng);
        let out_spec = LayerSpec::binary(hidden, 1, Activation::Linear).frozen(true);
        let ones = Array2::from_elem((1, hidden), 1.0f32);
        let out = Layer::new(out_spec, ones.clone(), None, Some(ones));
        Self::new(alloc::vec![first, out])
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let last = self.layers.last().ok_or(NnError::Empty)?;
        if last.spec.activation != Activation::Linear {
            return Err(NnError::LastLayerNotLinear);
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                let prev = self.layers[i - 1].spec.fan_out;
                if layer.spec.fan_in != prev {
                    return Err(NnError::LayerChain {
                        layer: i,
                        expected: prev,
                        got: layer.spec.fan_in,
                    });
                }
            }
            layer.validate(i)?;
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.fan_out
    }

    /// True when any layer carries binary weights.
    pub fn is_binary(&self) -> bool {
        self.layers.iter().any(|l| l.spec.weights_binary)
    }

    pub fn same_architecture(&self, other: &Network) -> bool {
        self.specs() == other.specs()
    }

    /// Total number of weights (excluding biases).
    pub fn num_weights(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.spec.num_params()).sum()
    }

    /// Logits for a batch of inputs.
    pub fn forward(&self, inputs: ArrayView2<f32>) -> Result<Array2<f32>, NnError> {
        let expected = self.input_dim();
        if inputs.ncols() != expected {
            return Err(NnError::InputWidth {
                expected,
                got: inputs.ncols(),
            });
        }
        let mut iter = self.layers.iter();
        let first = iter.next().expect("validated network");
        let mut x = first.preactivations(inputs);
        x.mapv_inplace(|v| first.spec.activation.apply(v));
        for layer in iter {
            let mut z = layer.preactivations(x.view());
            z.mapv_inplace(|v| layer.spec.activation.apply(v));
            x = z;
        }
        Ok(x)
    }

    /// Predicted labels for a batch.
    pub fn predict(&self, inputs: ArrayView2<f32>) -> Result<Vec<i32>, NnError> {
        let mut out = Vec::with_capacity(inputs.nrows());
        for chunk in inputs.axis_chunks_iter(Axis(0), EVAL_CHUNK) {
            out.extend(classify(self.forward(chunk)?.view()));
        }
        Ok(out)
    }

    /// Number of misclassified patterns.
    pub fn count_errors(&self, data: &Dataset) -> Result<usize, NnError> {
        self.check_task(data)?;
        let preds = self.predict(data.inputs.view())?;
        Ok(preds.iter().zip(&data.labels).filter(|(p, y)| p != y).count())
    }

    /// Fraction of misclassified patterns.
    pub fn train_error(&self, data: &Dataset) -> Result<f64, NnError> {
        Ok(self.count_errors(data)? as f64 / data.len() as f64)
    }

    pub(crate) fn check_task(&self, data: &Dataset) -> Result<(), NnError> {
        let expected = data.task.num_outputs();
        if self.output_dim() != expected {
            return Err(NnError::OutputArity {
                outputs: self.output_dim(),
                expected,
            });
        }
        if data.inputs.ncols() != self.input_dim() {
            return Err(NnError::InputWidth {
                expected: self.input_dim(),
                got: data.inputs.ncols(),
            });
        }
        Ok(())
    }

    /// Weights become `sign(latent)`; latent values are left untouched.
    pub fn binarize(&self) -> Result<Network, NnError> {
        let mut out = self.clone();
        for (i, layer) in out.layers.iter_mut().enumerate() {
            if layer.spec.weights_binary || layer.latent.is_some() {
                if layer.latent.is_none() {
                    return Err(NnError::MissingLatent { layer: i });
                }
                layer.rebinarize();
            }
        }
        Ok(out)
    }

    /// Flattened trainable parameters: per layer, the (latent) weights in
    /// row-major order followed by the bias.
    pub fn params(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend(layer.trainable_weights().iter().copied());
            if let Some(b) = &layer.bias {
                out.extend(b.iter().copied());
            }
        }
        out
    }

    /// Inverse of [`Network::params`]; binary layers are re-binarized.
    pub fn with_params(&self, params: &[f32]) -> Result<Network, NnError> {
        let expected = self.num_params();
        if params.len() != expected {
            return Err(NnError::ParamLength {
                expected,
                got: params.len(),
            });
        }
        let mut out = self.clone();
        let mut rest = params;
        for layer in out.layers.iter_mut() {
            let w = layer.trainable_weights_mut();
            let (head, tail) = rest.split_at(w.len());
            w.iter_mut().zip(head).for_each(|(d, &s)| *d = s);
            rest = tail;
            if let Some(b) = layer.bias.as_mut() {
                let (head, tail) = rest.split_at(b.len());
                b.iter_mut().zip(head).for_each(|(d, &s)| *d = s);
                rest = tail;
            }
            layer.rebinarize();
        }
        out.validate()?;
        Ok(out)
    }

    /// Flattened weights actually used by the forward pass (no biases).
    pub fn weight_vector(&self) -> Vec<f32> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().copied())
            .collect()
    }
}

/// Layer specs of a plain fully-connected network.
pub fn mlp_specs(widths: &[usize], binary: bool, bias: bool) -> Vec<LayerSpec> {
    let n = widths.len().saturating_sub(1);
    (0..n)
        .map(|i| {
            let act = if i + 1 == n {
                Activation::Linear
            } else if binary {
                Activation::Sign
            } else {
                Activation::Relu
            };
            let spec = if binary {
                LayerSpec::binary(widths[i], widths[i + 1], act)
            } else {
                LayerSpec::dense(widths[i], widths[i + 1], act)
            };
            spec.with_bias(bias)
        })
        .collect()
}

/// Labels from logits: argmax (lowest index wins ties) for several outputs,
/// `sign` with `sign(0) = +1` for a single output.
pub fn classify(logits: ArrayView2<f32>) -> Vec<i32> {
    if logits.ncols() == 1 {
        return logits.column(0).iter().map(|&z| sign(z) as i32).collect();
    }
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = k;
                }
            }
            best as i32
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    /// Single output, labels in `{-1, +1}`.
    Binary,
    /// `k` outputs, labels in `0..k`.
    Classes(usize),
}

impl Task {
    pub fn num_outputs(self) -> usize {
        match self {
            Task::Binary => 1,
            Task::Classes(k) => k,
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            Task::Binary => 2,
            Task::Classes(k) => k,
        }
    }

    pub fn is_valid(self, label: i32) -> bool {
        match self {
            Task::Binary => label == 1 || label == -1,
            Task::Classes(k) => label >= 0 && (label as usize) < k,
        }
    }

    /// The `i`-th class label (`i < num_classes`).
    pub fn label(self, i: usize) -> i32 {
        match self {
            Task::Binary => {
                if i == 0 {
                    -1
                } else {
                    1
                }
            }
            Task::Classes(_) => i as i32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Array2<f32>,
    pub labels: Vec<i32>,
    pub task: Task,
}

impl Dataset {
    pub fn new(inputs: Array2<f32>, labels: Vec<i32>, task: Task) -> Result<Self, NnError> {
        if inputs.nrows() == 0 {
            return Err(NnError::EmptyDataset);
        }
        if inputs.nrows() != labels.len() {
            return Err(NnError::LabelCount {
                rows: inputs.nrows(),
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&y| !task.is_valid(y)) {
            return Err(NnError::BadLabel { label });
        }
        Ok(Self {
            inputs,
            labels,
            task,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// Rows `start..end` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            inputs: self.inputs.slice(s![start..end, ..]).to_owned(),
            labels: self.labels[start..end].to_vec(),
            task: self.task,
        }
    }

    /// Selected rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            task: self.task,
        }
    }
}
