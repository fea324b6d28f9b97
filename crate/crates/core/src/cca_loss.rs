//! Differentiable total-correlation objective for two-branch training.
//!
//! For batch outputs X (d_x×N) and Y (d_y×N) the objective is the nuclear
//! norm of the whitened cross-covariance `T = Cxx^{-1/2}·Cxy·Cyy^{-1/2}`,
//! i.e. the sum of the canonical correlations of the batch. With the SVD
//! `T = U·D·Vᵀ` the gradient with respect to the centered batch is
//!
//! ```text
//! ∂f/∂X = (1/(N−1)) · (2·∇xx·X̂ + ∇xy·Ŷ)
//! ∇xx  = −1/2 · Cxx^{-1/2}·U·D·Uᵀ·Cxx^{-1/2}
//! ∇xy  =        Cxx^{-1/2}·U·Vᵀ·Cyy^{-1/2}
//! ```
//!
//! and symmetrically for Y. Because centering is idempotent and the
//! expression above has zero column sums, it is also the gradient with
//! respect to the raw batch. The objective is a quantity to *maximize*;
//! trainers negate it to obtain a descent problem.
//!
//! When `components = Some(k)`, only the top-k singular triplets enter the
//! objective and the gradient (U, V, D restricted to their leading k
//! columns).

use crate::error::{Error, Result};
use crate::linalg::{covariance_pair, inv_sqrt_spd, svd, Matrix};

/// Total-correlation loss with cached factors for the backward pass.
#[derive(Debug)]
pub struct CcaLoss {
    ridge: f64,
    components: Option<usize>,
    cache: Option<Cache>,
}

#[derive(Debug)]
struct Cache {
    rx: Matrix,
    ry: Matrix,
    u: Matrix,
    v: Matrix,
    d: Vec<f64>,
    xc: Matrix,
    yc: Matrix,
    n: usize,
}

impl CcaLoss {
    /// `components = None` sums all `min(d_x, d_y)` correlations.
    pub fn new(ridge: f64, components: Option<usize>) -> Self {
        CcaLoss {
            ridge,
            components,
            cache: None,
        }
    }

    /// Computes the batch total correlation and caches the factorization
    /// for [`CcaLoss::backward`].
    pub fn forward(&mut self, x: &Matrix, y: &Matrix) -> Result<f64> {
        let full = x.rows().min(y.rows());
        let k = self.components.unwrap_or(full);
        if k == 0 || k > full {
            return Err(Error::Usage(format!(
                "loss over {k} components is impossible for {}x{} outputs",
                x.rows(),
                y.rows()
            )));
        }
        if x.cols() <= x.rows().max(y.rows()) {
            log::warn!(
                "batch of {} samples for {}x{} outputs: covariance estimates \
                 need more samples than features",
                x.cols(),
                x.rows(),
                y.rows()
            );
        }
        let cov = covariance_pair(x, y, self.ridge)?;
        let rx = inv_sqrt_spd(&cov.cxx, "batch cxx")?;
        let ry = inv_sqrt_spd(&cov.cyy, "batch cyy")?;
        let t = rx.matmul(&cov.cxy)?.matmul(&ry)?;
        let dec = svd(&t)?;

        let value = dec.singular_values[..k].iter().sum();
        self.cache = Some(Cache {
            u: dec.u.col_range(0, k),
            v: dec.vt.transpose().col_range(0, k),
            d: dec.singular_values[..k].to_vec(),
            rx,
            ry,
            xc: cov.xc,
            yc: cov.yc,
            n: cov.n,
        });
        Ok(value)
    }

    /// Gradients of the objective with respect to the raw batches, in the
    /// same layout as the inputs. Ascent direction: adding a small multiple
    /// increases the objective.
    ///
    /// Requires a preceding [`CcaLoss::forward`]; the cache is consumed.
    pub fn backward(&mut self) -> Result<(Matrix, Matrix)> {
        let c = self.cache.take().ok_or_else(|| {
            Error::Usage("CcaLoss::backward called without a cached forward pass".into())
        })?;
        let scale = 1.0 / (c.n as f64 - 1.0);

        let gx = view_gradient(&c.rx, &c.ry, &c.u, &c.v, &c.d, &c.xc, &c.yc, scale)?;
        let gy = view_gradient(&c.ry, &c.rx, &c.v, &c.u, &c.d, &c.yc, &c.xc, scale)?;
        Ok((gx, gy))
    }
}

/// Gradient for one view; the other view's quantities are passed swapped,
/// which exactly mirrors the symmetry of the objective.
#[allow(clippy::too_many_arguments)]
fn view_gradient(
    r_own: &Matrix,
    r_other: &Matrix,
    u_own: &Matrix,
    u_other: &Matrix,
    d: &[f64],
    own_centered: &Matrix,
    other_centered: &Matrix,
    scale: f64,
) -> Result<Matrix> {
    // ∇own,own = −1/2 · R·U·D·Uᵀ·R
    let ru = r_own.matmul(u_own)?; // d_own×k
    let mut rud = ru.clone();
    for j in 0..d.len() {
        for i in 0..rud.rows() {
            let v = rud.get(i, j) * d[j];
            rud.set(i, j, v);
        }
    }
    let nabla_own = rud.matmul_nt(&ru)?.scaled(-0.5);

    // ∇own,other = R_own·U_own·U_otherᵀ·R_other
    let r_other_u = r_other.matmul(u_other)?; // d_other×k
    let nabla_cross = ru.matmul_nt(&r_other_u)?;

    let mut g = nabla_own.matmul(own_centered)?.scaled(2.0);
    let cross = nabla_cross.matmul(other_centered)?;
    g = g.add(&cross)?;
    g.scale_mut(scale);
    Ok(g)
}
