//! RMSProp parameter updates.
//!
//! Plain descent: each parameter keeps a decayed average of its squared
//! gradient and steps by `lr·g/(√v + ε)`. The method is diagonal, so
//! every parameter updates independently; callers that maximize an
//! objective negate their gradients before accumulation.

use crate::error::{Error, Result};
use crate::nn::NetworkState;

pub const RMSPROP_DECAY: f64 = 0.9;
pub const RMSPROP_EPSILON: f64 = 1e-7;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;

/// One element-wise RMSProp update; `accum` carries the squared-gradient
/// average between calls.
pub fn rmsprop_update(
    params: &mut [f64],
    grads: &[f64],
    accum: &mut [f64],
    learning_rate: f64,
    decay: f64,
    epsilon: f64,
) {
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(accum.iter_mut()) {
        *v = decay * *v + (1.0 - decay) * g * g;
        *p -= learning_rate * g / (v.sqrt() + epsilon);
    }
}

/// RMSProp state for one network; block accumulators are allocated on the
/// first step and keyed by the network's parameter visit order.
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    accum: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(learning_rate: f64) -> Self {
        RmsProp {
            learning_rate,
            decay: RMSPROP_DECAY,
            epsilon: RMSPROP_EPSILON,
            accum: Vec::new(),
        }
    }

    /// Applies one update from the network's accumulated gradients.
    /// Gradients must be finite; the caller still owns zeroing them.
    pub fn step(&mut self, net: &mut NetworkState) -> Result<()> {
        let mut bad = false;
        net.visit_params(&mut |_, g| {
            if g.iter().any(|v| !v.is_finite()) {
                bad = true;
            }
        });
        if bad {
            return Err(Error::Numerical(
                "non-finite gradient reached the optimizer".into(),
            ));
        }

        let first = self.accum.is_empty();
        let mut idx = 0;
        let accum = &mut self.accum;
        let (lr, decay, eps) = (self.learning_rate, self.decay, self.epsilon);
        net.visit_params_mut(&mut |p, g| {
            if first {
                accum.push(vec![0.0; p.len()]);
            }
            rmsprop_update(p, g, &mut accum[idx], lr, decay, eps);
            idx += 1;
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::DataShape;
    use crate::nn::{LayerSpec, NetworkSpec, NetworkState};
    use crate::rngutil::rng_from_seed;

    #[test]
    fn quadratic_parameter_converges_toward_its_optimum() {
        // f(w) = (w − 3)², minimized by gradient descent from w = 0.
        let mut w = [0.0f64];
        let mut accum = [0.0f64];
        for _ in 0..200 {
            let g = [2.0 * (w[0] - 3.0)];
            rmsprop_update(&mut w, &g, &mut accum, 0.05, RMSPROP_DECAY, RMSPROP_EPSILON);
        }
        assert!((w[0] - 3.0).abs() < 0.1, "ended at {}", w[0]);
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let spec = NetworkSpec {
            input: DataShape::Vector { len: 4 },
            layers: vec![LayerSpec::Dense { inputs: 4, outputs: 3 }],
        };
        let mut rng = rng_from_seed(1);
        let mut net = NetworkState::init(&spec, &mut rng).unwrap();
        let mut before = Vec::new();
        net.visit_params(&mut |p, _| before.push(p.to_vec()));

        let mut opt = RmsProp::new(1e-3);
        opt.step(&mut net).unwrap();

        let mut after = Vec::new();
        net.visit_params(&mut |p, _| after.push(p.to_vec()));
        assert_eq!(before, after);
    }

    #[test]
    fn parameters_update_independently() {
        // Two coordinates with different histories behave exactly like two
        // separate 1-D runs.
        let mut joint = [1.0, -2.0];
        let mut joint_accum = [0.0, 0.0];
        let mut solo_a = [1.0];
        let mut solo_a_accum = [0.0];
        let mut solo_b = [-2.0];
        let mut solo_b_accum = [0.0];
        for step in 0..20 {
            let ga = (step as f64 + 1.0) * 0.3;
            let gb = -0.7;
            rmsprop_update(&mut joint, &[ga, gb], &mut joint_accum, 1e-2, 0.9, 1e-7);
            rmsprop_update(&mut solo_a, &[ga], &mut solo_a_accum, 1e-2, 0.9, 1e-7);
            rmsprop_update(&mut solo_b, &[gb], &mut solo_b_accum, 1e-2, 0.9, 1e-7);
        }
        assert_eq!(joint[0].to_bits(), solo_a[0].to_bits());
        assert_eq!(joint[1].to_bits(), solo_b[0].to_bits());
    }

    #[test]
    fn non_finite_gradients_are_refused() {
        let spec = NetworkSpec {
            input: DataShape::Vector { len: 2 },
            layers: vec![LayerSpec::Dense { inputs: 2, outputs: 2 }],
        };
        let mut rng = rng_from_seed(2);
        let mut net = NetworkState::init(&spec, &mut rng).unwrap();
        net.visit_params_mut(&mut |_, g| g[0] = f64::NAN);
        let mut opt = RmsProp::new(1e-3);
        assert!(opt.step(&mut net).is_err());
    }
}
