//! Core library for cross-modal correlation learning between audio and text.
//!
//! The crate provides the numerical machinery for learning maximally
//! correlated representations of paired audio/text data and for running
//! bidirectional retrieval on top of them:
//!
//! - [`linalg`]: dense row-major matrices, symmetric eigendecomposition,
//!   SVD, covariance estimation and inverse matrix square roots.
//! - [`cca`]: linear canonical correlation analysis fitted from paired
//!   observation matrices.
//! - [`cca_loss`]: the differentiable total-correlation objective used to
//!   train network branches, with analytic gradients.
//! - [`nn`]: a small layer zoo (convolution, pooling, batch normalization,
//!   dense, activations) with manual forward/backward passes.
//! - [`features`]: WAV decoding, resampling, MFCC and mel spectrogram
//!   extraction, and sub-sequence decimation.
//! - [`synthdata`]: synthetic paired datasets with known population
//!   correlation structure.
//! - [`training`]: the four trainable model variants and the RMSProp
//!   optimizer.
//! - [`retrieval`]: cosine ranking, MRR and recall metrics, and the
//!   cross-validation driver.
//! - [`formats`]: binary feature files, model files, and loss traces.
//! - [`gradcheck`]: finite-difference gradient verification harness.
//!
//! Everything is `f64`, single-threaded, and deterministic: any two runs
//! with the same seeds and inputs produce bit-identical results.

pub mod cca;
pub mod cca_loss;
pub mod error;
pub mod features;
pub mod formats;
pub mod gradcheck;
pub mod linalg;
pub mod nn;
pub mod retrieval;
pub(crate) mod rngutil;
pub mod synthdata;
pub mod training;

pub use error::{Error, Result};
