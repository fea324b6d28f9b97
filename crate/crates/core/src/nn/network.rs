//! Network state: parameters, caches, and the forward/backward drivers.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::activation::ActState;
use crate::nn::batchnorm::BnState;
use crate::nn::conv::ConvState;
use crate::nn::dense::DenseState;
use crate::nn::pool::PoolState;
use crate::nn::tensor::{BatchData, DataShape, Tensor};
use crate::nn::{LayerSpec, NetworkSpec};
use crate::rngutil::SeededRng;

/// Whether a pass updates statistics and stores caches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone)]
pub(crate) enum LayerState {
    Conv2d(ConvState),
    MaxPool2d(PoolState),
    BatchNorm(BnState),
    Dense(DenseState),
    Activation(ActState),
    Flatten(FlattenState),
}

#[derive(Debug, Clone)]
pub(crate) struct FlattenState {
    cache: Option<(usize, usize, usize, usize)>,
}

impl FlattenState {
    fn forward(&mut self, input: Tensor, mode: Mode) -> BatchData {
        let (n, c, h, w) = (input.n, input.c, input.h, input.w);
        let features = c * h * w;
        let mut out = Matrix::zeros(features, n);
        for s in 0..n {
            let block = input.sample(s);
            for (f, &v) in block.iter().enumerate() {
                out[(f, s)] = v;
            }
        }
        if mode == Mode::Train {
            self.cache = Some((n, c, h, w));
        }
        BatchData::Vectors(out)
    }

    fn backward(&mut self, grad: Matrix) -> Result<Tensor> {
        let (n, c, h, w) = self.cache.take().ok_or_else(|| {
            Error::Usage("flatten backward without a cached training forward pass".into())
        })?;
        if grad.rows() != c * h * w || grad.cols() != n {
            return Err(Error::dim(
                "flatten backward",
                format!("{}x{}", c * h * w, n),
                grad.shape_str(),
            ));
        }
        let mut out = Tensor::zeros(n, c, h, w);
        for s in 0..n {
            let block = out.sample_mut(s);
            for (f, v) in block.iter_mut().enumerate() {
                *v = grad[(f, s)];
            }
        }
        Ok(out)
    }
}

/// A network's trainable parameters, running statistics, and transient
/// backprop caches, instantiated from a validated [`NetworkSpec`].
#[derive(Debug, Clone)]
pub struct NetworkState {
    pub spec: NetworkSpec,
    pub(crate) layers: Vec<LayerState>,
}

impl NetworkState {
    /// Allocates parameters for `spec`, validating shape composition first.
    /// Weights draw from the rng in layer order (convolution and dense
    /// weights only), so a seed pins every parameter.
    pub fn init(spec: &NetworkSpec, rng: &mut SeededRng) -> Result<NetworkState> {
        let shapes = spec.shape_trace()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (layer, shape_in) in spec.layers.iter().zip(&shapes) {
            let state = match *layer {
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel_h,
                    kernel_w,
                } => LayerState::Conv2d(ConvState::init(
                    in_channels,
                    out_channels,
                    kernel_h,
                    kernel_w,
                    rng,
                )),
                LayerSpec::MaxPool2d { pool_h, pool_w } => {
                    LayerState::MaxPool2d(PoolState::new(pool_h, pool_w))
                }
                LayerSpec::BatchNorm => {
                    let size = match *shape_in {
                        DataShape::Planes { channels, .. } => channels,
                        DataShape::Vector { len } => len,
                    };
                    LayerState::BatchNorm(BnState::new(size))
                }
                LayerSpec::Dense { inputs, outputs } => {
                    LayerState::Dense(DenseState::init(inputs, outputs, rng))
                }
                LayerSpec::Activation(act) => LayerState::Activation(ActState::new(act)),
                LayerSpec::Flatten => LayerState::Flatten(FlattenState { cache: None }),
            };
            layers.push(state);
        }
        Ok(NetworkState {
            spec: spec.clone(),
            layers,
        })
    }

    /// Runs the batch through every layer. Train mode stores caches for a
    /// following [`NetworkState::backward`] and updates batch-norm running
    /// statistics; infer mode does neither.
    pub fn forward(&mut self, input: BatchData, mode: Mode) -> Result<BatchData> {
        if input.per_sample_shape() != self.spec.input {
            return Err(Error::dim(
                "network forward",
                self.spec.input.to_string(),
                input.per_sample_shape().to_string(),
            ));
        }
        if input.batch_len() == 0 {
            return Err(Error::Usage("network forward on an empty batch".into()));
        }
        let mut data = input;
        for layer in &mut self.layers {
            data = match layer {
                LayerState::Conv2d(st) => {
                    BatchData::Planes(st.forward(data.into_planes("conv2d")?, mode)?)
                }
                LayerState::MaxPool2d(st) => {
                    BatchData::Planes(st.forward(data.into_planes("maxpool2d")?, mode)?)
                }
                LayerState::BatchNorm(st) => st.forward(data, mode)?,
                LayerState::Dense(st) => {
                    BatchData::Vectors(st.forward(data.into_vectors("dense")?, mode)?)
                }
                LayerState::Activation(st) => st.forward(data, mode)?,
                LayerState::Flatten(st) => st.forward(data.into_planes("flatten")?, mode),
            };
        }
        Ok(data)
    }

    /// Propagates an output-shaped gradient back to an input-shaped one,
    /// accumulating parameter gradients along the way. Requires a training
    /// forward pass on this state; caches are consumed.
    pub fn backward(&mut self, grad: BatchData) -> Result<BatchData> {
        let mut data = grad;
        for layer in self.layers.iter_mut().rev() {
            data = match layer {
                LayerState::Conv2d(st) => {
                    BatchData::Planes(st.backward(data.into_planes("conv2d backward")?)?)
                }
                LayerState::MaxPool2d(st) => {
                    BatchData::Planes(st.backward(data.into_planes("maxpool2d backward")?)?)
                }
                LayerState::BatchNorm(st) => st.backward(data)?,
                LayerState::Dense(st) => {
                    BatchData::Vectors(st.backward(data.into_vectors("dense backward")?)?)
                }
                LayerState::Activation(st) => st.backward(data)?,
                LayerState::Flatten(st) => {
                    BatchData::Planes(st.backward(data.into_vectors("flatten backward")?)?)
                }
            };
        }
        Ok(data)
    }

    /// Clears accumulated parameter gradients.
    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            match layer {
                LayerState::Conv2d(st) => st.zero_grads(),
                LayerState::Dense(st) => st.zero_grads(),
                LayerState::BatchNorm(st) => st.zero_grads(),
                _ => {}
            }
        }
    }

    /// Visits every (parameters, gradients) pair in a fixed order: layers
    /// first to last; within a layer weights/gamma before bias/beta.
    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        for layer in &mut self.layers {
            match layer {
                LayerState::Conv2d(st) => {
                    f(&mut st.weights, &mut st.dweights);
                    f(&mut st.bias, &mut st.dbias);
                }
                LayerState::Dense(st) => {
                    f(&mut st.weights, &mut st.dweights);
                    f(&mut st.bias, &mut st.dbias);
                }
                LayerState::BatchNorm(st) => {
                    f(&mut st.gamma, &mut st.dgamma);
                    f(&mut st.beta, &mut st.dbeta);
                }
                _ => {}
            }
        }
    }

    /// Read-only (parameters, gradients) visit in the same order as
    /// [`NetworkState::visit_params_mut`].
    pub fn visit_params(&self, f: &mut dyn FnMut(&[f64], &[f64])) {
        for layer in &self.layers {
            match layer {
                LayerState::Conv2d(st) => {
                    f(&st.weights, &st.dweights);
                    f(&st.bias, &st.dbias);
                }
                LayerState::Dense(st) => {
                    f(&st.weights, &st.dweights);
                    f(&st.bias, &st.dbias);
                }
                LayerState::BatchNorm(st) => {
                    f(&st.gamma, &st.dgamma);
                    f(&st.beta, &st.dbeta);
                }
                _ => {}
            }
        }
    }

    /// Total trainable parameter count.
    pub fn param_count(&self) -> usize {
        let mut count = 0;
        self.visit_params(&mut |p, _| count += p.len());
        count
    }
}
