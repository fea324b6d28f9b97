//! Elementwise activation layers.
//!
//! ReLU caches a positivity mask (the subgradient at exactly zero is taken
//! as zero); sigmoid and tanh cache their outputs, from which the local
//! derivative is algebraically recoverable; linear passes through.

use crate::error::{Error, Result};
use crate::nn::tensor::BatchData;
use crate::nn::{Activation, Mode};

#[derive(Debug, Clone)]
pub(crate) struct ActState {
    pub act: Activation,
    cache: Option<ActCache>,
}

#[derive(Debug, Clone)]
enum ActCache {
    Mask(Vec<bool>),
    Output(Vec<f64>),
    PassThrough,
}

impl ActState {
    pub fn new(act: Activation) -> Self {
        ActState { act, cache: None }
    }

    pub fn forward(&mut self, mut batch: BatchData, mode: Mode) -> Result<BatchData> {
        let cache = match self.act {
            Activation::Relu => {
                let mut mask = Vec::new();
                if mode == Mode::Train {
                    mask.reserve(batch.data().len());
                }
                for v in batch.data_mut() {
                    let pos = *v > 0.0;
                    if mode == Mode::Train {
                        mask.push(pos);
                    }
                    if !pos {
                        *v = 0.0;
                    }
                }
                ActCache::Mask(mask)
            }
            Activation::Sigmoid => {
                for v in batch.data_mut() {
                    *v = 1.0 / (1.0 + (-*v).exp());
                }
                ActCache::Output(batch.data().to_vec())
            }
            Activation::Tanh => {
                for v in batch.data_mut() {
                    *v = v.tanh();
                }
                ActCache::Output(batch.data().to_vec())
            }
            Activation::Linear => ActCache::PassThrough,
        };
        if mode == Mode::Train {
            self.cache = Some(cache);
        }
        Ok(batch)
    }

    pub fn backward(&mut self, mut grad: BatchData) -> Result<BatchData> {
        let cache = self.cache.take().ok_or_else(|| {
            Error::Usage("activation backward without a cached training forward pass".into())
        })?;
        match (&cache, self.act) {
            (ActCache::Mask(mask), Activation::Relu) => {
                if mask.len() != grad.data().len() {
                    return Err(Error::dim(
                        "relu backward",
                        format!("{} elements", mask.len()),
                        format!("{}", grad.data().len()),
                    ));
                }
                for (g, &m) in grad.data_mut().iter_mut().zip(mask) {
                    if !m {
                        *g = 0.0;
                    }
                }
            }
            (ActCache::Output(out), Activation::Sigmoid) => {
                for (g, &s) in grad.data_mut().iter_mut().zip(out) {
                    *g *= s * (1.0 - s);
                }
            }
            (ActCache::Output(out), Activation::Tanh) => {
                for (g, &t) in grad.data_mut().iter_mut().zip(out) {
                    *g *= 1.0 - t * t;
                }
            }
            (ActCache::PassThrough, Activation::Linear) => {}
            _ => {
                return Err(Error::Usage(
                    "activation cache does not match the activation kind".into(),
                ))
            }
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn batch(vals: &[f64]) -> BatchData {
        BatchData::Vectors(Matrix::from_vec(vals.len(), 1, vals.to_vec()).unwrap())
    }

    #[test]
    fn relu_clamps_and_masks() {
        let mut a = ActState::new(Activation::Relu);
        let out = a.forward(batch(&[-1.0, 0.0, 2.0]), Mode::Train).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 2.0]);
        let g = a.backward(batch(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn sigmoid_and_tanh_derivatives_from_cached_output() {
        let mut s = ActState::new(Activation::Sigmoid);
        let out = s.forward(batch(&[0.0]), Mode::Train).unwrap();
        assert!((out.data()[0] - 0.5).abs() < 1e-15);
        let g = s.backward(batch(&[1.0])).unwrap();
        assert!((g.data()[0] - 0.25).abs() < 1e-15);

        let mut t = ActState::new(Activation::Tanh);
        t.forward(batch(&[0.5]), Mode::Train).unwrap();
        let g = t.backward(batch(&[1.0])).unwrap();
        let expect = 1.0 - 0.5f64.tanh().powi(2);
        assert!((g.data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn linear_is_identity_both_ways() {
        let mut l = ActState::new(Activation::Linear);
        let out = l.forward(batch(&[1.5, -2.0]), Mode::Train).unwrap();
        assert_eq!(out.data(), &[1.5, -2.0]);
        let g = l.backward(batch(&[3.0, 4.0])).unwrap();
        assert_eq!(g.data(), &[3.0, 4.0]);
    }

    #[test]
    fn infer_mode_stores_no_cache() {
        let mut a = ActState::new(Activation::Relu);
        a.forward(batch(&[1.0]), Mode::Infer).unwrap();
        assert!(a.backward(batch(&[1.0])).is_err());
    }
}
