//! Dense network: hidden layers are affine -> batch norm -> ReLU, the output
//! layer is affine -> sigmoid.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Dataset;

/// Variance offset inside the batch-norm square root.
pub const BN_EPS: f64 = 1e-5;

/// Running statistics momentum used when none is given.
pub const DEFAULT_BN_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub width: usize,
    pub has_batchnorm: bool,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn hidden(width: usize) -> Self {
        LayerSpec {
            width,
            has_batchnorm: true,
            activation: Activation::Relu,
        }
    }

    pub fn output(width: usize) -> Self {
        LayerSpec {
            width,
            has_batchnorm: false,
            activation: Activation::Sigmoid,
        }
    }
}

/// Train mode normalizes with batch statistics and updates the running
/// averages; infer mode uses the running averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<S> {
    pub gamma: Array1<S>,
    pub beta: Array1<S>,
    pub running_mean: Array1<S>,
    pub running_var: Array1<S>,
}

impl<S: Scalar> BatchNorm<S> {
    pub fn new(width: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<S> {
    /// fan_in x width
    pub weights: Array2<S>,
    pub bias: Array1<S>,
    pub batchnorm: Option<BatchNorm<S>>,
    pub activation: Activation,
}

impl<S: Scalar> Layer<S> {
    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            width: self.weights.ncols(),
            has_batchnorm: self.batchnorm.is_some(),
            activation: self.activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn width(&self) -> usize {
        self.weights.ncols()
    }
}

/// Scale factors applied before and after the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization<S> {
    /// Max |input| over the training data.
    pub norm_in: S,
    /// Max target over the training data.
    pub norm_out: S,
}

impl<S: Scalar> Normalization<S> {
    pub fn new(norm_in: S, norm_out: S) -> Result<Self> {
        if !(norm_in > S::zero() && norm_out > S::zero()) || !norm_in.is_finite() || !norm_out.is_finite() {
            return Err(Error::domain(format!(
                "normalization scales must be positive and finite, got {norm_in} and {norm_out}"
            )));
        }
        Ok(Normalization { norm_in, norm_out })
    }

    pub fn normalize_inputs(&self, x: ArrayView2<'_, S>) -> Array2<S> {
        x.mapv(|v| v / self.norm_in)
    }

    pub fn normalize_targets(&self, y: ArrayView2<'_, S>) -> Array2<S> {
        y.mapv(|v| v / self.norm_out)
    }

    pub fn denormalize_outputs(&self, y: ArrayView2<'_, S>) -> Array2<S> {
        y.mapv(|v| v * self.norm_out)
    }
}

/// Scale normalization: inputs and targets are each divided by their maximum.
pub fn normalize_fit<S: Scalar>(train: &Dataset<S>) -> Result<Normalization<S>> {
    let norm_in = train.inputs().iter().fold(S::zero(), |m, v| m.max(v.abs()));
    let norm_out = train.targets().iter().fold(S::zero(), |m, v| m.max(*v));
    if !(norm_in > S::zero()) || !(norm_out > S::zero()) {
        return Err(Error::domain(
            "cannot fit normalization: inputs or targets are all zero",
        ));
    }
    Normalization::new(norm_in, norm_out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel<S> {
    input_dim: usize,
    layers: Vec<Layer<S>>,
    norm: Option<Normalization<S>>,
    bn_momentum: S,
}

/// Per-layer intermediates of a train-mode pass.
#[derive(Debug, Clone)]
struct LayerCache<S> {
    input: Array2<S>,
    xhat: Option<Array2<S>>,
    inv_std: Option<Array1<S>>,
    /// Post-activation output.
    output: Array2<S>,
}

/// Everything `backward` needs from a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<S> {
    layers: Vec<LayerCache<S>>,
}

impl<S: Scalar> ForwardCache<S> {
    pub fn output(&self) -> ArrayView2<'_, S> {
        self.layers.last().expect("non-empty network").output.view()
    }

    /// Which ReLU units were active, flattened layer by layer.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.layers
            .iter()
            .filter(|c| c.xhat.is_some())
            .flat_map(|c| c.output.iter().map(|v| *v > S::zero()).collect::<Vec<_>>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients<S> {
    pub weights: Array2<S>,
    pub bias: Array1<S>,
    pub gamma: Option<Array1<S>>,
    pub beta: Option<Array1<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<S> {
    pub layers: Vec<LayerGradients<S>>,
}

impl<S: Scalar> Gradients<S> {
    /// Same order as [`NetworkModel::parameter_slices_mut`].
    pub fn slices(&self) -> Vec<&[S]> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.push(g.weights.as_slice().expect("standard layout"));
            out.push(g.bias.as_slice().expect("standard layout"));
            if let (Some(gamma), Some(beta)) = (&g.gamma, &g.beta) {
                out.push(gamma.as_slice().expect("standard layout"));
                out.push(beta.as_slice().expect("standard layout"));
            }
        }
        out
    }
}

/// Logistic function kept strictly inside (0, 1) even where it saturates.
fn sigmoid<S: Scalar>(x: S) -> S {
    let s = if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    };
    s.max(S::epsilon()).min(S::one() - S::epsilon())
}

impl<S: Scalar> NetworkModel<S> {
    /// Fresh network with ReLU + batch-norm hidden layers of the given widths
    /// and a sigmoid output layer of `output_dim` units. Weights are drawn
    /// uniformly from +-sqrt(6 / fan_in); biases start at zero.
    pub fn initialize(input_dim: usize, hidden: &[usize], output_dim: usize, seed: u64) -> Result<Self> {
        let mut specs: Vec<LayerSpec> = hidden.iter().map(|w| LayerSpec::hidden(*w)).collect();
        specs.push(LayerSpec::output(output_dim));
        Self::from_specs(input_dim, &specs, seed)
    }

    pub fn from_specs(input_dim: usize, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        if input_dim == 0 || specs.is_empty() || specs.iter().any(|s| s.width == 0) {
            return Err(Error::domain("network layers must have positive widths"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fan_in = input_dim;
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let limit = (6.0 / fan_in as f64).sqrt();
            let weights = Array2::from_shape_simple_fn((fan_in, spec.width), || {
                S::lit(rng.random_range(-limit..limit))
            });
            layers.push(Layer {
                weights,
                bias: Array1::zeros(spec.width),
                batchnorm: spec.has_batchnorm.then(|| BatchNorm::new(spec.width)),
                activation: spec.activation,
            });
            fan_in = spec.width;
        }
        Ok(NetworkModel {
            input_dim,
            layers,
            norm: None,
            bn_momentum: S::lit(DEFAULT_BN_MOMENTUM),
        })
    }

    /// Assembles a network from explicit layers (used by the model loader and tests).
    pub fn from_layers(input_dim: usize, layers: Vec<Layer<S>>, norm: Option<Normalization<S>>) -> Result<Self> {
        let mut fan_in = input_dim;
        for (i, l) in layers.iter().enumerate() {
            if l.fan_in() != fan_in || l.bias.len() != l.width() {
                return Err(Error::domain(format!("layer {i} has inconsistent shapes")));
            }
            if let Some(bn) = &l.batchnorm {
                let w = l.width();
                if bn.gamma.len() != w || bn.beta.len() != w || bn.running_mean.len() != w || bn.running_var.len() != w {
                    return Err(Error::domain(format!("layer {i} batch-norm shapes do not match width")));
                }
                if bn.running_var.iter().any(|v| !(*v > S::zero())) {
                    return Err(Error::domain(format!("layer {i} running variance must be positive")));
                }
            }
            fan_in = l.width();
        }
        if layers.is_empty() {
            return Err(Error::domain("network needs at least one layer"));
        }
        Ok(NetworkModel {
            input_dim,
            layers,
            norm,
            bn_momentum: S::lit(DEFAULT_BN_MOMENTUM),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.width())
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<S>] {
        &mut self.layers
    }

    /// Input dimension followed by every layer width.
    pub fn architecture(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.layers.iter().map(|l| l.width()))
            .collect()
    }

    pub fn normalization(&self) -> Option<Normalization<S>> {
        self.norm
    }

    pub fn set_normalization(&mut self, norm: Normalization<S>) {
        self.norm = Some(norm);
    }

    pub fn set_bn_momentum(&mut self, momentum: S) {
        self.bn_momentum = momentum;
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len() + l.batchnorm.as_ref().map_or(0, |b| 2 * b.gamma.len()))
            .sum()
    }

    /// Trainable parameters: per layer W, b, then gamma and beta when present.
    pub fn parameter_slices_mut(&mut self) -> Vec<&mut [S]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.weights.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
            if let Some(bn) = &mut l.batchnorm {
                out.push(bn.gamma.as_slice_mut().expect("standard layout"));
                out.push(bn.beta.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    fn check_batch(&self, x: &ArrayView2<'_, S>) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(Error::domain(format!(
                "batch has {} columns, network expects {}",
                x.ncols(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Forward pass on normalized inputs; outputs lie in (0, 1).
    pub fn forward(&mut self, x: ArrayView2<'_, S>, mode: Mode) -> Result<Array2<S>> {
        match mode {
            Mode::Train => Ok(self.forward_train(x)?.output().to_owned()),
            Mode::Infer => self.forward_infer(x),
        }
    }

    pub fn forward_infer(&self, x: ArrayView2<'_, S>) -> Result<Array2<S>> {
        self.check_batch(&x)?;
        let eps = S::lit(BN_EPS);
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            if let Some(bn) = &layer.batchnorm {
                let scale = Zip::from(&bn.gamma)
                    .and(&bn.running_var)
                    .map_collect(|g, v| *g / (*v + eps).sqrt());
                let shift = Zip::from(&bn.beta)
                    .and(&bn.running_mean)
                    .and(&scale)
                    .map_collect(|b, m, s| *b - *m * *s);
                z *= &scale;
                z += &shift;
            }
            apply_activation(&mut z, layer.activation);
            h = z;
        }
        Ok(h)
    }

    /// Train-mode pass that keeps the intermediates for [`Self::backward`].
    pub fn forward_train(&mut self, x: ArrayView2<'_, S>) -> Result<ForwardCache<S>> {
        self.check_batch(&x)?;
        let m = x.nrows();
        if m < 2 {
            return Err(Error::domain(format!(
                "train-mode batch needs at least 2 rows for batch statistics, got {m}"
            )));
        }
        let eps = S::lit(BN_EPS);
        let momentum = self.bn_momentum;
        let inv_m = S::one() / S::lit(m as f64);
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for layer in &mut self.layers {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            let (xhat, inv_std) = match &mut layer.batchnorm {
                Some(bn) => {
                    let mean = z.sum_axis(Axis(0)) * inv_m;
                    z -= &mean;
                    let var = z.map_axis(Axis(0), |col| col.iter().map(|v| *v * *v).sum::<S>()) * inv_m;
                    let inv_std = var.mapv(|v| S::one() / (v + eps).sqrt());
                    z *= &inv_std;
                    let xhat = z.clone();
                    z *= &bn.gamma;
                    z += &bn.beta;
                    let keep = S::one() - momentum;
                    Zip::from(&mut bn.running_mean)
                        .and(&mean)
                        .for_each(|r, b| *r = momentum * *r + keep * *b);
                    Zip::from(&mut bn.running_var)
                        .and(&var)
                        .for_each(|r, b| *r = momentum * *r + keep * *b);
                    (Some(xhat), Some(inv_std))
                }
                None => (None, None),
            };
            apply_activation(&mut z, layer.activation);
            let input = std::mem::replace(&mut h, z.clone());
            caches.push(LayerCache {
                input,
                xhat,
                inv_std,
                output: z,
            });
        }
        Ok(ForwardCache { layers: caches })
    }

    /// Exact gradients of a loss whose derivative with respect to the network
    /// output is `grad_output`, through the cached train-mode pass.
    pub fn backward(&self, cache: &ForwardCache<S>, grad_output: ArrayView2<'_, S>) -> Result<Gradients<S>> {
        if cache.layers.len() != self.layers.len() {
            return Err(Error::State("forward cache does not match this network".into()));
        }
        if grad_output.dim() != cache.output().dim() {
            return Err(Error::domain("output gradient shape does not match the forward pass"));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_output.to_owned();
        for (idx, (layer, c)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            // Through the activation.
            match layer.activation {
                Activation::Sigmoid => Zip::from(&mut upstream)
                    .and(&c.output)
                    .for_each(|g, s| *g *= *s * (S::one() - *s)),
                Activation::Relu => Zip::from(&mut upstream)
                    .and(&c.output)
                    .for_each(|g, a| {
                        if !(*a > S::zero()) {
                            *g = S::zero()
                        }
                    }),
            }
            let (gamma_grad, beta_grad) = match (&layer.batchnorm, &c.xhat, &c.inv_std) {
                (Some(bn), Some(xhat), Some(inv_std)) => {
                    let m = S::lit(upstream.nrows() as f64);
                    let dbeta = upstream.sum_axis(Axis(0));
                    let dgamma = (&upstream * xhat).sum_axis(Axis(0));
                    // dxhat = dy * gamma; dz = inv_std/m * (m dxhat - sum dxhat - xhat sum(dxhat xhat))
                    let dxhat = &upstream * &bn.gamma;
                    let sum_dxhat = &dbeta * &bn.gamma;
                    let sum_dxhat_xhat = &dgamma * &bn.gamma;
                    let scale = inv_std.mapv(|s| s / m);
                    let mut dz = dxhat * m;
                    dz -= &sum_dxhat;
                    Zip::from(dz.rows_mut()).and(xhat.rows()).for_each(|mut row, xr| {
                        Zip::from(&mut row)
                            .and(&xr)
                            .and(&sum_dxhat_xhat)
                            .and(&scale)
                            .for_each(|d, x, sx, s| *d = (*d - *x * *sx) * *s);
                    });
                    upstream = dz;
                    (Some(dgamma), Some(dbeta))
                }
                _ => (None, None),
            };
            let weights = c.input.t().dot(&upstream).as_standard_layout().into_owned();
            let bias = upstream.sum_axis(Axis(0));
            if idx > 0 {
                upstream = upstream.dot(&layer.weights.t());
            }
            grads.push(LayerGradients {
                weights,
                bias,
                gamma: gamma_grad,
                beta: beta_grad,
            });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// Concentrations (mmol/L) for raw inputs: normalize, infer, rescale.
    pub fn predict(&self, inputs: ArrayView2<'_, S>) -> Result<Array2<S>> {
        let norm = self
            .norm
            .ok_or_else(|| Error::State("model has no fitted normalization; train it first".into()))?;
        let out = self.forward_infer(norm.normalize_inputs(inputs).view())?;
        Ok(norm.denormalize_outputs(out.view()))
    }
}

fn apply_activation<S: Scalar>(z: &mut Array2<S>, activation: Activation) {
    match activation {
        Activation::Relu => z.mapv_inplace(|v| if v > S::zero() { v } else { S::zero() }),
        Activation::Sigmoid => z.mapv_inplace(sigmoid),
    }
}
