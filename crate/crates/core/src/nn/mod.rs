//! Neural network layers with hand-written forward and backward passes.
//!
//! The layer zoo is deliberately small: 2-D convolution (same padding,
//! stride 1), non-overlapping max pooling, batch normalization, dense
//! layers, elementwise activations, and flattening. Specs are validated by
//! shape composition before any parameter is allocated, so a malformed
//! architecture fails fast rather than mid-training.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod network;
mod pool;
pub mod tensor;

pub use network::{Mode, NetworkState};
pub(crate) use network::LayerState;
pub use tensor::{BatchData, DataShape, Tensor};

use crate::error::{Error, Result};

/// Elementwise nonlinearity applied by an activation layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    /// Identity; present so a spec can state "no nonlinearity" explicitly.
    Linear,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }

    pub fn from_name(name: &str) -> Result<Activation> {
        match name {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

/// One layer of a network architecture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    /// Same-padding, stride-1 convolution; kernels must have odd extents.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
    },
    /// Non-overlapping max pooling; output extents use floor division and
    /// trailing rows/columns that do not fill a window are dropped.
    MaxPool2d { pool_h: usize, pool_w: usize },
    /// Batch normalization: per-channel on plane batches, per-feature on
    /// vector batches. Applied before the activation it precedes.
    BatchNorm,
    /// Affine map on vector batches.
    Dense { inputs: usize, outputs: usize },
    /// Elementwise nonlinearity.
    Activation(Activation),
    /// Planes → vector of length channels·height·width.
    Flatten,
}

impl LayerSpec {
    /// Output shape for a given input shape, or a dimension error when the
    /// layer cannot accept it.
    pub fn output_shape(&self, input: DataShape) -> Result<DataShape> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
            } => {
                let DataShape::Planes {
                    channels,
                    height,
                    width,
                } = input
                else {
                    return Err(Error::dim("conv2d", "plane input", input.to_string()));
                };
                if channels != in_channels {
                    return Err(Error::dim(
                        "conv2d",
                        format!("{in_channels} input channels"),
                        format!("{channels}"),
                    ));
                }
                if kernel_h % 2 == 0 || kernel_w % 2 == 0 || kernel_h == 0 || kernel_w == 0 {
                    return Err(Error::Config(format!(
                        "same padding requires odd kernel extents, got {kernel_h}x{kernel_w}"
                    )));
                }
                if out_channels == 0 {
                    return Err(Error::Config("conv2d needs at least one output channel".into()));
                }
                Ok(DataShape::Planes {
                    channels: out_channels,
                    height,
                    width,
                })
            }
            LayerSpec::MaxPool2d { pool_h, pool_w } => {
                let DataShape::Planes {
                    channels,
                    height,
                    width,
                } = input
                else {
                    return Err(Error::dim("maxpool2d", "plane input", input.to_string()));
                };
                if pool_h == 0 || pool_w == 0 {
                    return Err(Error::Config("pool window extents must be positive".into()));
                }
                let oh = height / pool_h;
                let ow = width / pool_w;
                if oh == 0 || ow == 0 {
                    return Err(Error::dim(
                        "maxpool2d",
                        format!("input at least {pool_h}x{pool_w}"),
                        format!("{height}x{width}"),
                    ));
                }
                Ok(DataShape::Planes {
                    channels,
                    height: oh,
                    width: ow,
                })
            }
            LayerSpec::BatchNorm | LayerSpec::Activation(_) => Ok(input),
            LayerSpec::Dense { inputs, outputs } => {
                let DataShape::Vector { len } = input else {
                    return Err(Error::dim("dense", "vector input", input.to_string()));
                };
                if len != inputs {
                    return Err(Error::dim(
                        "dense",
                        format!("{inputs} inputs"),
                        format!("{len}"),
                    ));
                }
                if outputs == 0 {
                    return Err(Error::Config("dense layer needs at least one output".into()));
                }
                Ok(DataShape::Vector { len: outputs })
            }
            LayerSpec::Flatten => match input {
                DataShape::Planes { .. } => Ok(DataShape::Vector { len: input.len() }),
                DataShape::Vector { .. } => {
                    Err(Error::dim("flatten", "plane input", input.to_string()))
                }
            },
        }
    }
}

/// An ordered layer list plus its declared input shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input: DataShape,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Composes shapes through every layer; the spec is valid iff this
    /// succeeds. Returns the final output shape.
    pub fn output_shape(&self) -> Result<DataShape> {
        let mut shape = self.input;
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer.output_shape(shape).map_err(|e| match e {
                Error::Dim {
                    context,
                    expected,
                    found,
                } => Error::Dim {
                    context,
                    expected,
                    found: format!("{found} (layer {i})"),
                },
                other => other,
            })?;
        }
        Ok(shape)
    }

    /// Per-layer input shapes (length = layers + 1, last = output shape).
    pub fn shape_trace(&self) -> Result<Vec<DataShape>> {
        let mut shapes = vec![self.input];
        for layer in &self.layers {
            let next = layer.output_shape(*shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    /// Output vector length; error if the network does not end in vectors.
    pub fn output_len(&self) -> Result<usize> {
        match self.output_shape()? {
            DataShape::Vector { len } => Ok(len),
            other => Err(Error::dim("output_len", "vector output", other.to_string())),
        }
    }
}

/// Which audio CNN front end to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CnnVariant {
    /// 20-band MFCC input, 1x20x161 → 1536.
    Mfcc,
    /// 96-band log-mel input, 1x96x161 → 3072.
    Mel,
}

impl CnnVariant {
    pub fn name(&self) -> &'static str {
        match self {
            CnnVariant::Mfcc => "mfcc",
            CnnVariant::Mel => "mel",
        }
    }

    pub fn from_name(name: &str) -> Result<CnnVariant> {
        match name {
            "mfcc" => Ok(CnnVariant::Mfcc),
            "mel" => Ok(CnnVariant::Mel),
            other => Err(Error::Config(format!("unknown CNN variant '{other}'"))),
        }
    }

    /// Spectrogram band count this variant consumes.
    pub fn bands(&self) -> usize {
        match self {
            CnnVariant::Mfcc => 20,
            CnnVariant::Mel => 96,
        }
    }
}

/// Convolutional audio front end.
///
/// The MFCC variant stacks three 3×3 convolutions (48/96/192 channels) with
/// batch norm before the activation, ReLU on all but the last (which stays
/// linear), and non-overlapping pools (2,2)/(3,3)/(3,3), flattening
/// 192×1×8 = 1536. The mel variant uses four convolutions (48/96/192/192)
/// with pools (4,2)/(4,3)/(3,3) after the first three, flattening
/// 192×2×8 = 3072.
pub fn build_audio_cnn(variant: CnnVariant) -> NetworkSpec {
    let conv = |i, o| LayerSpec::Conv2d {
        in_channels: i,
        out_channels: o,
        kernel_h: 3,
        kernel_w: 3,
    };
    let pool = |h, w| LayerSpec::MaxPool2d { pool_h: h, pool_w: w };
    let act = |a| LayerSpec::Activation(a);
    match variant {
        CnnVariant::Mfcc => NetworkSpec {
            input: DataShape::Planes {
                channels: 1,
                height: 20,
                width: 161,
            },
            layers: vec![
                conv(1, 48),
                LayerSpec::BatchNorm,
                act(Activation::Relu),
                pool(2, 2),
                conv(48, 96),
                LayerSpec::BatchNorm,
                act(Activation::Relu),
                pool(3, 3),
                conv(96, 192),
                LayerSpec::BatchNorm,
                act(Activation::Linear),
                pool(3, 3),
                LayerSpec::Flatten,
            ],
        },
        CnnVariant::Mel => NetworkSpec {
            input: DataShape::Planes {
                channels: 1,
                height: 96,
                width: 161,
            },
            layers: vec![
                conv(1, 48),
                LayerSpec::BatchNorm,
                act(Activation::Relu),
                pool(4, 2),
                conv(48, 96),
                LayerSpec::BatchNorm,
                act(Activation::Relu),
                pool(4, 3),
                conv(96, 192),
                LayerSpec::BatchNorm,
                act(Activation::Relu),
                pool(3, 3),
                conv(192, 192),
                LayerSpec::BatchNorm,
                act(Activation::Linear),
                LayerSpec::Flatten,
            ],
        },
    }
}

/// Three-dense-layer projection head: 1024 sigmoid, 1024 sigmoid, `d`
/// linear.
pub fn build_sub_dnn(input_dim: usize, d: usize) -> NetworkSpec {
    let dense = |i, o| LayerSpec::Dense { inputs: i, outputs: o };
    NetworkSpec {
        input: DataShape::Vector { len: input_dim },
        layers: vec![
            dense(input_dim, 1024),
            LayerSpec::Activation(Activation::Sigmoid),
            dense(1024, 1024),
            LayerSpec::Activation(Activation::Sigmoid),
            dense(1024, d),
            LayerSpec::Activation(Activation::Linear),
        ],
    }
}
