//! Batched data containers moved between layers.
//!
//! Plane batches are NCHW: sample-major, then channel, row, column, so each
//! sample is one contiguous block. Vector batches reuse [`Matrix`] in the
//! features×samples orientation shared with the correlation code.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Per-sample shape flowing through a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataShape {
    /// channels × height × width.
    Planes {
        channels: usize,
        height: usize,
        width: usize,
    },
    /// Flat feature vector.
    Vector { len: usize },
}

impl DataShape {
    /// Total scalars per sample.
    pub fn len(&self) -> usize {
        match *self {
            DataShape::Planes {
                channels,
                height,
                width,
            } => channels * height * width,
            DataShape::Vector { len } => len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for DataShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            DataShape::Planes {
                channels,
                height,
                width,
            } => write!(f, "{channels}x{height}x{width}"),
            DataShape::Vector { len } => write!(f, "vector[{len}]"),
        }
    }
}

/// NCHW batch of image-like planes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::dim(
                "Tensor::from_vec",
                format!("{} elements", n * c * h * w),
                format!("{}", data.len()),
            ));
        }
        Ok(Tensor { n, c, h, w, data })
    }

    #[inline]
    pub fn idx(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(n, c, y, x)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut f64 {
        let i = self.idx(n, c, y, x);
        &mut self.data[i]
    }

    /// Contiguous c·h·w block of one sample.
    pub fn sample(&self, n: usize) -> &[f64] {
        let stride = self.c * self.h * self.w;
        &self.data[n * stride..(n + 1) * stride]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f64] {
        let stride = self.c * self.h * self.w;
        &mut self.data[n * stride..(n + 1) * stride]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn per_sample_shape(&self) -> DataShape {
        DataShape::Planes {
            channels: self.c,
            height: self.h,
            width: self.w,
        }
    }
}

/// A batch at some point in the network: planes or flat vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum BatchData {
    Planes(Tensor),
    /// features × samples.
    Vectors(Matrix),
}

impl BatchData {
    /// Number of samples in the batch.
    pub fn batch_len(&self) -> usize {
        match self {
            BatchData::Planes(t) => t.n,
            BatchData::Vectors(m) => m.cols(),
        }
    }

    /// Shape of a single sample.
    pub fn per_sample_shape(&self) -> DataShape {
        match self {
            BatchData::Planes(t) => t.per_sample_shape(),
            BatchData::Vectors(m) => DataShape::Vector { len: m.rows() },
        }
    }

    pub fn data(&self) -> &[f64] {
        match self {
            BatchData::Planes(t) => t.data(),
            BatchData::Vectors(m) => m.data(),
        }
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        match self {
            BatchData::Planes(t) => t.data_mut(),
            BatchData::Vectors(m) => m.data_mut(),
        }
    }

    /// Unwraps a vector batch; dimension error when the batch is planes.
    pub fn into_vectors(self, context: &'static str) -> Result<Matrix> {
        match self {
            BatchData::Vectors(m) => Ok(m),
            BatchData::Planes(t) => Err(Error::dim(
                context,
                "vector batch".to_string(),
                format!("plane batch {}", t.per_sample_shape()),
            )),
        }
    }

    /// Unwraps a plane batch; dimension error when the batch is vectors.
    pub fn into_planes(self, context: &'static str) -> Result<Tensor> {
        match self {
            BatchData::Planes(t) => Ok(t),
            BatchData::Vectors(m) => Err(Error::dim(
                context,
                "plane batch".to_string(),
                format!("vector batch of {} features", m.rows()),
            )),
        }
    }
}
