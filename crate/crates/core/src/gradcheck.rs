//! Finite-difference verification of analytic gradients.
//!
//! Every backward pass in this crate is hand-derived, so the harness below
//! is the ground truth they are all held against: central differences
//! `(f(x+h)−f(x−h))/2h` compared entry-by-entry with the analytic gradient
//! under a floored relative error. Inputs are nudged away from ReLU kinks
//! before checking (the subgradient there is a convention, not a
//! derivative), and the fixed seeds keep max-pool windows tie-free.

use crate::cca_loss::CcaLoss;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::tensor::{BatchData, DataShape, Tensor};
use crate::nn::{Activation, LayerSpec, Mode, NetworkSpec, NetworkState};
use crate::rngutil::{normal, rng_from_seed};

/// Harness parameters; the defaults are what every built-in check uses.
#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Maximum floored relative error accepted by [`GradCheckReport::passed`].
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

/// Outcome of one gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Entries compared.
    pub checked: usize,
    /// Largest floored relative error observed.
    pub max_rel_err: f64,
    /// Location and values of the worst entry: (description, analytic,
    /// numeric).
    pub worst: Option<(String, f64, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }

    fn absorb(&mut self, location: String, analytic: f64, numeric: f64) {
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        self.checked += 1;
        if rel > self.max_rel_err {
            self.max_rel_err = rel;
            self.worst = Some((location, analytic, numeric));
        }
    }

    fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        if other.max_rel_err > self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
        }
    }
}

fn empty_report() -> GradCheckReport {
    GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        worst: None,
    }
}

/// Compares `analytic` with central differences of `f` around `x0`, over
/// every coordinate.
pub fn check_gradient(
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
    x0: &[f64],
    analytic: &[f64],
    label: &str,
    step: f64,
) -> Result<GradCheckReport> {
    if x0.len() != analytic.len() {
        return Err(Error::dim(
            "check_gradient",
            format!("{} gradient entries", x0.len()),
            format!("{}", analytic.len()),
        ));
    }
    let mut report = empty_report();
    let mut probe = x0.to_vec();
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let fp = f(&probe)?;
        probe[i] = orig - step;
        let fm = f(&probe)?;
        probe[i] = orig;
        let numeric = (fp - fm) / (2.0 * step);
        report.absorb(format!("{label}[{i}]"), analytic[i], numeric);
    }
    Ok(report)
}

/// Verifies the correlation objective's gradients on one random batch of
/// two `d`×`n` views.
pub fn check_cca_loss(d: usize, n: usize, ridge: f64, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = rng_from_seed(cfg.seed);
    let x = Matrix::from_fn(d, n, |_, _| normal(&mut rng));
    let y = Matrix::from_fn(d, n, |_, _| normal(&mut rng));

    let mut loss = CcaLoss::new(ridge, None);
    loss.forward(&x, &y)?;
    let (gx, gy) = loss.backward()?;

    let mut report = empty_report();
    {
        let mut f = |data: &[f64]| {
            let xp = Matrix::from_vec(d, n, data.to_vec())?;
            CcaLoss::new(ridge, None).forward(&xp, &y)
        };
        report.merge(check_gradient(&mut f, x.data(), gx.data(), "grad_x", cfg.step)?);
    }
    {
        let mut f = |data: &[f64]| {
            let yp = Matrix::from_vec(d, n, data.to_vec())?;
            CcaLoss::new(ridge, None).forward(&x, &yp)
        };
        report.merge(check_gradient(&mut f, y.data(), gy.data(), "grad_y", cfg.step)?);
    }
    Ok(report)
}

/// Verifies input and parameter gradients of a whole network against the
/// scalar probe `Σ c·forward(x)` with fixed random coefficients `c`.
///
/// `corrupt` deliberately biases one analytic entry before comparison; the
/// check must then fail, which is how the harness proves it can detect a
/// broken gradient.
pub fn check_network(
    spec: &NetworkSpec,
    batch: usize,
    cfg: &GradCheckConfig,
    corrupt: bool,
) -> Result<GradCheckReport> {
    let mut rng = rng_from_seed(cfg.seed);
    let mut net = NetworkState::init(spec, &mut rng)?;

    let input0 = random_batch(spec.input, batch, &mut rng);
    let out_shape = spec.output_shape()?;
    let coeff: Vec<f64> = (0..out_shape.len() * batch).map(|_| normal(&mut rng)).collect();

    // Analytic pass.
    net.zero_grads();
    let out = net.forward(clone_batch(&input0), Mode::Train)?;
    let dot: f64 = out.data().iter().zip(&coeff).map(|(a, b)| a * b).sum();
    if !dot.is_finite() {
        return Err(Error::Numerical("probe objective is not finite".into()));
    }
    let grad_batch = batch_from_data(out_shape, batch, coeff.clone());
    let input_grad = net.backward(grad_batch)?;
    let mut analytic_input = input_grad.data().to_vec();
    if corrupt {
        analytic_input[0] += 0.5 * analytic_input[0].abs().max(1.0);
    }

    let mut report = empty_report();
    // Input gradients.
    {
        let net_cell = std::cell::RefCell::new(net.clone());
        let mut f = |data: &[f64]| {
            let probe = batch_from_data(spec.input, batch, data.to_vec());
            let out = net_cell.borrow_mut().forward(probe, Mode::Train)?;
            Ok(out.data().iter().zip(&coeff).map(|(a, b)| a * b).sum())
        };
        report.merge(check_gradient(
            &mut f,
            input0.data(),
            &analytic_input,
            "input",
            cfg.step,
        )?);
    }

    // Parameter gradients, block by block in visit order.
    let mut analytic_params: Vec<Vec<f64>> = Vec::new();
    net.visit_params_mut(&mut |_, g| analytic_params.push(g.to_vec()));
    let block_count = analytic_params.len();
    for b in 0..block_count {
        let x0: Vec<f64> = {
            let mut snap = Vec::new();
            let mut idx = 0;
            net.visit_params_mut(&mut |p, _| {
                if idx == b {
                    snap = p.to_vec();
                }
                idx += 1;
            });
            snap
        };
        let net_cell = std::cell::RefCell::new(net.clone());
        let input_ref = &input0;
        let coeff_ref = &coeff;
        let mut f = |data: &[f64]| {
            let mut n = net_cell.borrow_mut();
            let mut idx = 0;
            n.visit_params_mut(&mut |p, _| {
                if idx == b {
                    p.copy_from_slice(data);
                }
                idx += 1;
            });
            let out = n.forward(clone_batch(input_ref), Mode::Train)?;
            Ok(out.data().iter().zip(coeff_ref).map(|(a, b)| a * b).sum())
        };
        report.merge(check_gradient(
            &mut f,
            &x0,
            &analytic_params[b],
            &format!("params[{b}]"),
            cfg.step,
        )?);
    }
    Ok(report)
}

/// Single-layer specs covering every layer kind, sized so a full check
/// runs in well under a second each.
pub fn standard_layer_suite() -> Vec<(&'static str, NetworkSpec, usize)> {
    let planes = |c, h, w| DataShape::Planes {
        channels: c,
        height: h,
        width: w,
    };
    vec![
        (
            "conv2d",
            NetworkSpec {
                input: planes(3, 6, 6),
                layers: vec![LayerSpec::Conv2d {
                    in_channels: 3,
                    out_channels: 4,
                    kernel_h: 3,
                    kernel_w: 3,
                }],
            },
            3,
        ),
        (
            "maxpool2d",
            NetworkSpec {
                input: planes(2, 6, 6),
                layers: vec![LayerSpec::MaxPool2d { pool_h: 2, pool_w: 3 }],
            },
            3,
        ),
        (
            "batchnorm-planes",
            NetworkSpec {
                input: planes(3, 4, 4),
                layers: vec![LayerSpec::BatchNorm],
            },
            3,
        ),
        (
            "batchnorm-vectors",
            NetworkSpec {
                input: DataShape::Vector { len: 7 },
                layers: vec![LayerSpec::BatchNorm],
            },
            5,
        ),
        (
            "dense",
            NetworkSpec {
                input: DataShape::Vector { len: 7 },
                layers: vec![LayerSpec::Dense { inputs: 7, outputs: 5 }],
            },
            4,
        ),
        (
            "relu",
            NetworkSpec {
                input: DataShape::Vector { len: 9 },
                layers: vec![LayerSpec::Activation(Activation::Relu)],
            },
            4,
        ),
        (
            "sigmoid",
            NetworkSpec {
                input: DataShape::Vector { len: 9 },
                layers: vec![LayerSpec::Activation(Activation::Sigmoid)],
            },
            4,
        ),
        (
            "tanh",
            NetworkSpec {
                input: DataShape::Vector { len: 9 },
                layers: vec![LayerSpec::Activation(Activation::Tanh)],
            },
            4,
        ),
        (
            "linear",
            NetworkSpec {
                input: DataShape::Vector { len: 9 },
                layers: vec![LayerSpec::Activation(Activation::Linear)],
            },
            4,
        ),
        (
            "flatten",
            NetworkSpec {
                input: planes(2, 3, 4),
                layers: vec![LayerSpec::Flatten],
            },
            3,
        ),
    ]
}

/// Runs [`check_network`] over the whole layer suite; returns per-layer
/// reports in suite order.
pub fn run_layer_suite(cfg: &GradCheckConfig) -> Result<Vec<(String, GradCheckReport)>> {
    standard_layer_suite()
        .into_iter()
        .map(|(name, spec, batch)| {
            let report = check_network(&spec, batch, cfg, false)?;
            Ok((name.to_string(), report))
        })
        .collect()
}

/// Random batch with values held away from zero so ReLU kinks and pool
/// ties stay outside the finite-difference step.
fn random_batch(shape: DataShape, batch: usize, rng: &mut crate::rngutil::SeededRng) -> BatchData {
    let data: Vec<f64> = (0..shape.len() * batch)
        .map(|_| {
            let v = normal(rng);
            v + 0.2 * v.signum()
        })
        .collect();
    batch_from_data(shape, batch, data)
}

fn batch_from_data(shape: DataShape, batch: usize, data: Vec<f64>) -> BatchData {
    match shape {
        DataShape::Planes {
            channels,
            height,
            width,
        } => BatchData::Planes(
            Tensor::from_vec(batch, channels, height, width, data).expect("sized by caller"),
        ),
        DataShape::Vector { len } => {
            // Stored feature-major: entry (f, s) at f·batch + s.
            BatchData::Vectors(Matrix::from_vec(len, batch, data).expect("sized by caller"))
        }
    }
}

fn clone_batch(b: &BatchData) -> BatchData {
    b.clone()
}
