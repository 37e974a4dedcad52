//! Feed-forward sub-networks on a single scalar input.
//!
//! Every sub-network maps one feature column to one output column. Hidden
//! layers carry a bias and may use ReLU; the output layer is linear and has no
//! bias because the additive model owns a single global intercept.
//!
//! Parameters are flattened layer by layer (weights row-major, then bias). The
//! output layer comes last, so when the hidden layers are frozen the trainable
//! parameters are a contiguous tail of the flat vector.

use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnamError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn relu(width: usize) -> Self {
        LayerSpec {
            width,
            activation: Activation::Relu,
        }
    }

    pub fn identity(width: usize) -> Self {
        LayerSpec {
            width,
            activation: Activation::Identity,
        }
    }
}

/// One dense layer, `z = a · W + b`, with `W` stored as `fan_in × fan_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Option<Array1<f64>>,
    pub activation: Activation,
}

impl Layer {
    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, |b| b.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentKind {
    Weights,
    Bias,
}

/// Position of one weight matrix or bias vector inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub layer: usize,
    pub kind: SegmentKind,
    pub shape: (usize, usize),
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.0 * self.shape.1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// All parameters of one sub-network as a flat vector.
///
/// `trainable` marks the coordinates that belong to the group `Θ_j`; the group
/// norm is taken over those coordinates only.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGroup {
    pub values: Array1<f64>,
    pub trainable: Range<usize>,
}

impl ParamGroup {
    pub fn trainable_values(&self) -> ArrayView1<'_, f64> {
        self.values.slice(ndarray::s![self.trainable.clone()])
    }

    pub fn norm(&self) -> f64 {
        l2_norm(self.trainable_values())
    }
}

pub(crate) fn l2_norm(v: ArrayView1<f64>) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Activations of every layer for a batch, input included (`activations[0]`).
#[derive(Clone, Debug)]
pub struct Trace {
    activations: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> ArrayView1<'_, f64> {
        self.activations
            .last()
            .expect("trace always holds the input")
            .column(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubNetwork {
    layers: Vec<Layer>,
    arch: Vec<LayerSpec>,
    frozen_hidden: bool,
}

impl SubNetwork {
    /// Uniform `[-s, s]` initialization with `s = 1/sqrt(fan_in)` for every
    /// weight and every hidden bias.
    pub fn init(arch: &[LayerSpec], seed: u64) -> Result<Self> {
        validate_arch(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(arch.len());
        let mut fan_in = 1usize;
        for (l, spec) in arch.iter().enumerate() {
            let s = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-s, s)
                .map_err(|e| SnamError::Config(format!("initialization range: {e}")))?;
            let weights = Array2::from_shape_simple_fn((fan_in, spec.width), || dist.sample(&mut rng));
            let bias = if l + 1 < arch.len() {
                Some(Array1::from_shape_simple_fn(spec.width, || dist.sample(&mut rng)))
            } else {
                None
            };
            layers.push(Layer {
                weights,
                bias,
                activation: spec.activation,
            });
            fan_in = spec.width;
        }
        Ok(SubNetwork {
            layers,
            arch: arch.to_vec(),
            frozen_hidden: false,
        })
    }

    /// All-zero parameters with the given architecture.
    pub fn zeros(arch: &[LayerSpec]) -> Result<Self> {
        let mut net = SubNetwork::init(arch, 0)?;
        net.layers.iter_mut().for_each(|layer| {
            layer.weights.fill(0.0);
            if let Some(b) = layer.bias.as_mut() {
                b.fill(0.0);
            }
        });
        Ok(net)
    }

    pub fn with_frozen_hidden(mut self, frozen: bool) -> Self {
        self.frozen_hidden = frozen;
        self
    }

    pub fn frozen_hidden(&self) -> bool {
        self.frozen_hidden
    }

    pub fn arch(&self) -> &[LayerSpec] {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    /// Width of the last hidden layer (`m_j`), if there is one.
    pub fn feature_width(&self) -> Option<usize> {
        (self.layers.len() > 1).then(|| self.arch[self.arch.len() - 2].width)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    pub fn trainable_range(&self) -> Range<usize> {
        let total = self.num_params();
        if self.frozen_hidden {
            total - self.layers.last().expect("non-empty").num_params()..total
        } else {
            0..total
        }
    }

    pub fn num_trainable(&self) -> usize {
        self.trainable_range().len()
    }

    pub fn layout(&self) -> Vec<Segment> {
        let mut segments = Vec::with_capacity(2 * self.layers.len());
        let mut offset = 0;
        for (l, layer) in self.layers.iter().enumerate() {
            let shape = layer.weights.dim();
            segments.push(Segment {
                layer: l,
                kind: SegmentKind::Weights,
                shape,
                offset,
            });
            offset += shape.0 * shape.1;
            if let Some(b) = &layer.bias {
                segments.push(Segment {
                    layer: l,
                    kind: SegmentKind::Bias,
                    shape: (1, b.len()),
                    offset,
                });
                offset += b.len();
            }
        }
        segments
    }

    pub fn flatten(&self) -> ParamGroup {
        let mut values = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            values.extend(layer.weights.iter());
            if let Some(b) = &layer.bias {
                values.extend(b.iter());
            }
        }
        ParamGroup {
            values: Array1::from_vec(values),
            trainable: self.trainable_range(),
        }
    }

    /// Inverse of [`SubNetwork::flatten`]; `values` covers every parameter.
    pub fn unflatten(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(SnamError::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                values.len()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let n = layer.weights.len();
            layer
                .weights
                .iter_mut()
                .zip(&values[offset..offset + n])
                .for_each(|(w, v)| *w = *v);
            offset += n;
            if let Some(b) = layer.bias.as_mut() {
                let n = b.len();
                b.iter_mut()
                    .zip(&values[offset..offset + n])
                    .for_each(|(w, v)| *w = *v);
                offset += n;
            }
        }
        Ok(())
    }

    pub fn trainable_params(&self) -> Array1<f64> {
        let flat = self.flatten();
        flat.values.slice(ndarray::s![flat.trainable]).to_owned()
    }

    pub fn set_trainable_params(&mut self, params: ArrayView1<f64>) -> Result<()> {
        let range = self.trainable_range();
        if params.len() != range.len() {
            return Err(SnamError::Shape(format!(
                "expected {} trainable parameters, got {}",
                range.len(),
                params.len()
            )));
        }
        if range.start == 0 {
            return self.unflatten(params.as_slice().unwrap_or(&params.to_vec()));
        }
        // Frozen: only the output layer (no bias) is trainable.
        let out = self.layers.last_mut().expect("non-empty");
        out.weights
            .iter_mut()
            .zip(params.iter())
            .for_each(|(w, v)| *w = *v);
        Ok(())
    }

    /// `‖Θ_j‖₂` over the trainable parameters.
    pub fn group_norm(&self) -> f64 {
        if self.frozen_hidden {
            l2_norm(
                self.layers
                    .last()
                    .expect("non-empty")
                    .weights
                    .view()
                    .into_shape_with_order(self.num_trainable())
                    .expect("contiguous"),
            )
        } else {
            self.flatten().norm()
        }
    }

    /// Output weights `θ_j` (the last layer's single column).
    pub fn output_weights(&self) -> ArrayView1<'_, f64> {
        self.layers.last().expect("non-empty").weights.column(0)
    }

    pub fn trace(&self, x: ArrayView1<f64>) -> Result<Trace> {
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(SnamError::NonFiniteInput { index });
        }
        let input = x.to_owned().insert_axis(Axis(1));
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input);
        for layer in &self.layers {
            let prev = activations.last().expect("non-empty");
            let mut z = prev.dot(&layer.weights);
            if let Some(b) = &layer.bias {
                z += b;
            }
            if layer.activation == Activation::Relu {
                z.mapv_inplace(|v| v.max(0.0));
            }
            activations.push(z);
        }
        Ok(Trace { activations })
    }

    /// `h_j(x_i)` for every sample.
    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self.trace(x)?.output().to_owned())
    }

    /// Last-hidden-layer activations `G_j`, an `n × m` matrix with
    /// `forward(x) = G_j · θ_j`.
    pub fn feature_map(&self, x: ArrayView1<f64>) -> Result<Array2<f64>> {
        if self.layers.len() < 2 {
            return Err(SnamError::Shape(
                "feature map requires at least one hidden layer".into(),
            ));
        }
        let mut trace = self.trace(x)?;
        let last_hidden = trace.activations.len() - 2;
        Ok(trace.activations.swap_remove(last_hidden))
    }

    /// Gradient of `Σ_i upstream_i · h_j(x_i)` with respect to every parameter.
    /// Frozen coordinates are returned as exact zeros.
    pub fn backward(&self, x: ArrayView1<f64>, upstream: ArrayView1<f64>) -> Result<ParamGroup> {
        let trace = self.trace(x)?;
        self.backward_from_trace(&trace, upstream)
    }

    pub fn backward_from_trace(&self, trace: &Trace, upstream: ArrayView1<f64>) -> Result<ParamGroup> {
        let n = trace.activations[0].nrows();
        if upstream.len() != n {
            return Err(SnamError::Shape(format!(
                "upstream has length {}, batch has {n} samples",
                upstream.len()
            )));
        }
        let layout = self.layout();
        let mut grad = Array1::<f64>::zeros(self.num_params());
        let mut delta = upstream.to_owned().insert_axis(Axis(1));
        for l in (0..self.layers.len()).rev() {
            let is_output = l + 1 == self.layers.len();
            if self.frozen_hidden && !is_output {
                break;
            }
            let a_prev = &trace.activations[l];
            let g_w = a_prev.t().dot(&delta);
            for seg in layout.iter().filter(|s| s.layer == l) {
                let dst = grad.slice_mut(ndarray::s![seg.range()]);
                match seg.kind {
                    SegmentKind::Weights => assign_flat(dst, g_w.view()),
                    SegmentKind::Bias => assign_flat(dst, delta.sum_axis(Axis(0)).insert_axis(Axis(0)).view()),
                }
            }
            if l == 0 || (self.frozen_hidden && l == self.layers.len() - 1) {
                break;
            }
            let mut next = delta.dot(&self.layers[l].weights.t());
            if self.layers[l - 1].activation == Activation::Relu {
                // ReLU subgradient at 0 is 0.
                ndarray::Zip::from(&mut next)
                    .and(a_prev)
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            delta = next;
        }
        Ok(ParamGroup {
            values: grad,
            trainable: self.trainable_range(),
        })
    }

    /// Directional derivative of the outputs along `tangent`, which covers the
    /// trainable parameters only (Jacobian-vector product).
    pub fn jvp(&self, x: ArrayView1<f64>, tangent: ArrayView1<f64>) -> Result<Array1<f64>> {
        let range = self.trainable_range();
        if tangent.len() != range.len() {
            return Err(SnamError::Shape(format!(
                "tangent has length {}, expected {}",
                tangent.len(),
                range.len()
            )));
        }
        let trace = self.trace(x)?;
        let mut full = Array1::<f64>::zeros(self.num_params());
        full.slice_mut(ndarray::s![range]).assign(&tangent);
        let layout = self.layout();
        let n = x.len();
        let mut dot_a = Array2::<f64>::zeros((n, 1));
        for (l, layer) in self.layers.iter().enumerate() {
            let a_prev = &trace.activations[l];
            let mut dz = dot_a.dot(&layer.weights);
            for seg in layout.iter().filter(|s| s.layer == l) {
                let t = full.slice(ndarray::s![seg.range()]);
                match seg.kind {
                    SegmentKind::Weights => {
                        let dw = t.into_shape_with_order(seg.shape).expect("contiguous");
                        dz += &a_prev.dot(&dw);
                    }
                    SegmentKind::Bias => dz += &t,
                }
            }
            if layer.activation == Activation::Relu {
                ndarray::Zip::from(&mut dz)
                    .and(&trace.activations[l + 1])
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            dot_a = dz;
        }
        Ok(dot_a.column(0).to_owned())
    }
}

fn assign_flat(mut dst: ndarray::ArrayViewMut1<f64>, src: ArrayView2<f64>) {
    dst.iter_mut().zip(src.iter()).for_each(|(d, s)| *d = *s);
}

fn validate_arch(arch: &[LayerSpec]) -> Result<()> {
    let last = arch
        .last()
        .ok_or_else(|| SnamError::Config("sub-network architecture is empty".into()))?;
    if arch.iter().any(|l| l.width == 0) {
        return Err(SnamError::Config("layer width must be at least 1".into()));
    }
    if last.activation != Activation::Identity {
        return Err(SnamError::Config("output layer must use identity activation".into()));
    }
    if last.width != 1 {
        return Err(SnamError::Config(format!(
            "output layer must have width 1, got {}",
            last.width
        )));
    }
    Ok(())
}

/// Hidden layers followed by the single linear output neuron.
pub fn with_output(hidden: &[LayerSpec]) -> Vec<LayerSpec> {
    let mut arch = hidden.to_vec();
    arch.push(LayerSpec::identity(1));
    arch
}
