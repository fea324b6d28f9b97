//! Linear canonical correlation analysis.
//!
//! Given two centered views X̂ (d_x×N) and Ŷ (d_y×N), the canonical
//! directions are obtained from the whitened cross-covariance
//! `T = Cxx^{-1/2} · Cxy · Cyy^{-1/2}`: its singular values are the
//! canonical correlations, and the projections are `Wx = Cxx^{-1/2}·U`,
//! `Wy = Cyy^{-1/2}·V`. The whitening construction makes the projected
//! views unit-covariance: `Wxᵀ·Cxx·Wx = I`.

use crate::error::{Error, Result};
use crate::linalg::{covariance_pair, inv_sqrt_spd, svd, Matrix};

/// A fitted linear CCA: projection matrices, training means, and the
/// canonical correlations of the training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct CcaModel {
    /// d_x×k; canonical x-projection, columns ordered by correlation.
    pub wx: Matrix,
    /// d_y×k canonical y-projection.
    pub wy: Matrix,
    /// Per-feature training means of the x view.
    pub mean_x: Vec<f64>,
    /// Per-feature training means of the y view.
    pub mean_y: Vec<f64>,
    /// Canonical correlations, descending; each lies in [0, 1] up to
    /// rounding (at most ~1e-6 above 1 for saturated components).
    pub correlations: Vec<f64>,
    /// Ridge used for the covariance blocks.
    pub ridge: f64,
}

impl CcaModel {
    /// Number of fitted components.
    pub fn components(&self) -> usize {
        self.correlations.len()
    }

    /// Sum of the canonical correlations.
    pub fn total_correlation(&self) -> f64 {
        self.correlations.iter().sum()
    }

    /// Projects x-view observations (features×samples) into the canonical
    /// space; output is k×samples.
    pub fn transform_x(&self, x: &Matrix) -> Result<Matrix> {
        transform(&self.wx, &self.mean_x, x, "transform_x")
    }

    /// Projects y-view observations into the canonical space.
    pub fn transform_y(&self, y: &Matrix) -> Result<Matrix> {
        transform(&self.wy, &self.mean_y, y, "transform_y")
    }

    /// Restriction to the leading `k` components.
    pub fn truncated(&self, k: usize) -> Result<CcaModel> {
        if k == 0 || k > self.components() {
            return Err(Error::Usage(format!(
                "cannot truncate a {}-component model to {k} components",
                self.components()
            )));
        }
        Ok(CcaModel {
            wx: self.wx.col_range(0, k),
            wy: self.wy.col_range(0, k),
            mean_x: self.mean_x.clone(),
            mean_y: self.mean_y.clone(),
            correlations: self.correlations[..k].to_vec(),
            ridge: self.ridge,
        })
    }
}

fn transform(w: &Matrix, mean: &[f64], data: &Matrix, context: &'static str) -> Result<Matrix> {
    if data.rows() != w.rows() {
        return Err(Error::dim(
            context,
            format!("{} features", w.rows()),
            format!("{} features", data.rows()),
        ));
    }
    let mut centered = data.clone();
    for i in 0..centered.rows() {
        let mu = mean[i];
        for v in centered.row_mut(i) {
            *v -= mu;
        }
    }
    w.matmul_tn(&centered)
}

/// Fits a `k`-component CCA on paired views (features×samples, equal sample
/// counts).
///
/// `ridge` is added to both auto-covariance diagonals; if either ridged
/// block is still numerically singular the fit fails with a singularity
/// error suggesting a larger ridge.
pub fn fit(x: &Matrix, y: &Matrix, k: usize, ridge: f64) -> Result<CcaModel> {
    let max_k = x.rows().min(y.rows());
    if k == 0 || k > max_k {
        return Err(Error::Usage(format!(
            "requested {k} components but views of {}x{} features support at most {max_k}",
            x.rows(),
            y.rows()
        )));
    }
    let cov = covariance_pair(x, y, ridge)?;
    let rx = inv_sqrt_spd(&cov.cxx, "cxx")?;
    let ry = inv_sqrt_spd(&cov.cyy, "cyy")?;
    let t = rx.matmul(&cov.cxy)?.matmul(&ry)?;
    let dec = svd(&t)?;

    let u_k = dec.u.col_range(0, k);
    let v_k = dec.vt.transpose().col_range(0, k);
    let wx = rx.matmul(&u_k)?;
    let wy = ry.matmul(&v_k)?;
    // Raw singular values; rounding can push them a hair above 1.
    let correlations = dec.singular_values[..k].to_vec();

    Ok(CcaModel {
        wx,
        wy,
        mean_x: cov.mean_x,
        mean_y: cov.mean_y,
        correlations,
        ridge,
    })
}
