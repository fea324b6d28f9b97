//! Dense (fully connected) layer: a pure affine map on vector batches.

use crate::error::{Error, Result};
use crate::linalg::{gemm_nn, gemm_nt, gemm_tn, Matrix};
use crate::nn::Mode;
use crate::rngutil::{uniform, SeededRng};

#[derive(Debug, Clone)]
pub(crate) struct DenseState {
    pub inputs: usize,
    pub outputs: usize,
    /// outputs×inputs, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub dweights: Vec<f64>,
    pub dbias: Vec<f64>,
    cache: Option<Matrix>,
}

impl DenseState {
    pub fn init(inputs: usize, outputs: usize, rng: &mut SeededRng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..outputs * inputs)
            .map(|_| uniform(rng, -limit, limit))
            .collect();
        DenseState {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
            dweights: vec![0.0; outputs * inputs],
            dbias: vec![0.0; outputs],
            cache: None,
        }
    }

    /// `y = W·x + b` columnwise over the batch (features×samples).
    pub fn forward(&mut self, input: Matrix, mode: Mode) -> Result<Matrix> {
        if input.rows() != self.inputs {
            return Err(Error::dim(
                "dense forward",
                format!("{} features", self.inputs),
                format!("{} features", input.rows()),
            ));
        }
        let n = input.cols();
        let mut out = Matrix::zeros(self.outputs, n);
        gemm_nn(
            self.outputs, self.inputs, n,
            &self.weights, input.data(), out.data_mut(),
            false,
        );
        for o in 0..self.outputs {
            let b = self.bias[o];
            for v in out.row_mut(o) {
                *v += b;
            }
        }
        if mode == Mode::Train {
            self.cache = Some(input);
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: Matrix) -> Result<Matrix> {
        let input = self.cache.take().ok_or_else(|| {
            Error::Usage("dense backward without a cached training forward pass".into())
        })?;
        if grad_out.rows() != self.outputs || grad_out.cols() != input.cols() {
            return Err(Error::dim(
                "dense backward",
                format!("{}x{}", self.outputs, input.cols()),
                grad_out.shape_str(),
            ));
        }
        // dW += dY·Xᵀ ; db += row sums of dY ; dX = Wᵀ·dY
        gemm_nt(
            self.outputs, grad_out.cols(), self.inputs,
            grad_out.data(), input.data(), &mut self.dweights,
            true,
        );
        for o in 0..self.outputs {
            self.dbias[o] += grad_out.row(o).iter().sum::<f64>();
        }
        let mut dinput = Matrix::zeros(self.inputs, grad_out.cols());
        gemm_tn(
            self.inputs, self.outputs, grad_out.cols(),
            &self.weights, grad_out.data(), dinput.data_mut(),
            false,
        );
        Ok(dinput)
    }

    pub fn zero_grads(&mut self) {
        self.dweights.fill(0.0);
        self.dbias.fill(0.0);
    }
}
