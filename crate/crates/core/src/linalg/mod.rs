//! Dense linear algebra: matrices, symmetric eigendecomposition, SVD,
//! covariance estimation, and SPD inverse square roots.

pub mod eig;
pub mod matrix;
pub mod svd;

pub use eig::{sym_eig, SymEig};
pub use matrix::{dot, gemm_nn, gemm_nt, gemm_tn, Matrix};
pub use svd::{svd, Svd};

use crate::error::{Error, Result};

/// Smallest eigenvalue accepted before an SPD matrix is declared singular.
pub const SPD_EIG_FLOOR: f64 = 1e-12;

/// Batch covariance structure of two views, plus the centered data it was
/// estimated from.
#[derive(Debug, Clone)]
pub struct CovariancePair {
    /// d_x×d_x, ridge-regularized: `x̂·x̂ᵀ/(N−1) + r·I`.
    pub cxx: Matrix,
    /// d_y×d_y, ridge-regularized.
    pub cyy: Matrix,
    /// d_x×d_y cross-covariance: `x̂·ŷᵀ/(N−1)`.
    pub cxy: Matrix,
    /// Centered x view (feature rows, sample columns).
    pub xc: Matrix,
    /// Centered y view.
    pub yc: Matrix,
    /// Per-feature means removed from x.
    pub mean_x: Vec<f64>,
    /// Per-feature means removed from y.
    pub mean_y: Vec<f64>,
    /// Sample count shared by both views.
    pub n: usize,
}

/// Centers both views over their sample columns and forms the regularized
/// covariance blocks.
///
/// Views are laid out features×samples. Requires at least 2 samples, equal
/// sample counts, and `ridge ≥ 0`.
pub fn covariance_pair(x: &Matrix, y: &Matrix, ridge: f64) -> Result<CovariancePair> {
    if x.cols() != y.cols() {
        return Err(Error::dim(
            "covariance_pair",
            format!("matching sample counts, x has {}", x.cols()),
            format!("y has {}", y.cols()),
        ));
    }
    let n = x.cols();
    if n < 2 {
        return Err(Error::Usage(format!(
            "covariance_pair needs at least 2 samples, got {n}"
        )));
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::Config(format!(
            "ridge must be finite and non-negative, got {ridge}"
        )));
    }

    let (xc, mean_x) = center_rows(x);
    let (yc, mean_y) = center_rows(y);
    let scale = 1.0 / (n as f64 - 1.0);

    let mut cxx = xc.matmul_nt(&xc)?;
    cxx.scale_mut(scale);
    cxx.add_diag_mut(ridge);

    let mut cyy = yc.matmul_nt(&yc)?;
    cyy.scale_mut(scale);
    cyy.add_diag_mut(ridge);

    let mut cxy = xc.matmul_nt(&yc)?;
    cxy.scale_mut(scale);

    Ok(CovariancePair {
        cxx,
        cyy,
        cxy,
        xc,
        yc,
        mean_x,
        mean_y,
        n,
    })
}

/// Subtracts the per-row mean; returns the centered matrix and the means.
pub fn center_rows(m: &Matrix) -> (Matrix, Vec<f64>) {
    let means = m.row_means();
    let mut c = m.clone();
    for i in 0..c.rows() {
        let mu = means[i];
        for v in c.row_mut(i) {
            *v -= mu;
        }
    }
    (c, means)
}

/// `A^{-1/2}` for a symmetric positive definite matrix.
///
/// Fails with a singularity error (naming `what`) if the smallest eigenvalue
/// is ≤ 1e-12; callers typically respond by raising the ridge term.
pub fn inv_sqrt_spd(a: &Matrix, what: &'static str) -> Result<Matrix> {
    spd_power(a, what, |l| 1.0 / l.sqrt())
}

/// `A^{1/2}` for a symmetric positive definite matrix.
pub fn sqrt_spd(a: &Matrix, what: &'static str) -> Result<Matrix> {
    spd_power(a, what, f64::sqrt)
}

/// `A^{-1}` for a symmetric positive definite matrix.
pub fn inv_spd(a: &Matrix, what: &'static str) -> Result<Matrix> {
    spd_power(a, what, |l| 1.0 / l)
}

fn spd_power(a: &Matrix, what: &'static str, f: impl Fn(f64) -> f64) -> Result<Matrix> {
    let eig = sym_eig(a)?;
    let min_eig = eig.values.last().copied().unwrap_or(0.0);
    if min_eig <= SPD_EIG_FLOOR {
        return Err(Error::Singular { what, min_eig });
    }
    let n = eig.values.len();
    // V · diag(f(λ)) · Vᵀ
    let mut scaled = eig.vectors.clone();
    for j in 0..n {
        let fj = f(eig.values[j]);
        for i in 0..n {
            let v = scaled.get(i, j) * fj;
            scaled.set(i, j, v);
        }
    }
    Ok(scaled.matmul_nt(&eig.vectors)?.symmetrized())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inv_sqrt_of_diagonal() {
        let r = inv_sqrt_spd(&Matrix::from_diag(&[4.0, 9.0]), "test").unwrap();
        assert!(r.max_abs_diff(&Matrix::from_diag(&[0.5, 1.0 / 3.0])) < 1e-12);

        let i = inv_sqrt_spd(&Matrix::identity(3), "test").unwrap();
        assert!(i.max_abs_diff(&Matrix::identity(3)) < 1e-12);
    }

    #[test]
    fn inv_sqrt_whitens_its_input() {
        let a = Matrix::from_rows(&[
            vec![2.0, 0.5, 0.1],
            vec![0.5, 1.5, 0.2],
            vec![0.1, 0.2, 1.0],
        ])
        .unwrap();
        let r = inv_sqrt_spd(&a, "test").unwrap();
        let white = r.matmul(&a).unwrap().matmul(&r).unwrap();
        assert!(white.max_abs_diff(&Matrix::identity(3)) < 1e-8);
    }

    #[test]
    fn singular_input_names_the_matrix() {
        let err = inv_sqrt_spd(&Matrix::from_diag(&[1.0, 0.0]), "cxx").unwrap_err();
        match err {
            Error::Singular { what, .. } => assert_eq!(what, "cxx"),
            other => panic!("expected Singular, got {other:?}"),
        }
    }

    #[test]
    fn identical_views_share_all_blocks() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![0.0, 1.0, -1.0]]).unwrap();
        let p = covariance_pair(&x, &x, 0.0).unwrap();
        assert!(p.cxx.max_abs_diff(&p.cyy) < 1e-15);
        assert!(p.cxx.max_abs_diff(&p.cxy) < 1e-15);
    }

    #[test]
    fn ridge_adds_exactly_to_the_diagonal() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![0.0, 1.0, -1.0]]).unwrap();
        let y = Matrix::from_rows(&[vec![2.0, 0.0, 1.0]]).unwrap();
        let plain = covariance_pair(&x, &y, 0.0).unwrap();
        let ridged = covariance_pair(&x, &y, 0.5).unwrap();
        for i in 0..2 {
            let diff = ridged.cxx.get(i, i) - plain.cxx.get(i, i);
            assert!((diff - 0.5).abs() < 1e-15);
        }
        // Off-diagonals and the cross block are untouched.
        assert!((ridged.cxx.get(0, 1) - plain.cxx.get(0, 1)).abs() < 1e-15);
        assert!(ridged.cxy.max_abs_diff(&plain.cxy) < 1e-15);
    }

    #[test]
    fn covariance_matches_naive_sum_over_samples() {
        let mut state = 42u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let x = Matrix::from_fn(4, 50, |_, _| next());
        let y = Matrix::from_fn(3, 50, |_, _| next());
        let p = covariance_pair(&x, &y, 0.0).unwrap();

        // Brute force: explicit loop over samples.
        let mx = x.row_means();
        let my = y.row_means();
        let mut cxy = Matrix::zeros(4, 3);
        for s in 0..50 {
            for i in 0..4 {
                for j in 0..3 {
                    cxy[(i, j)] += (x.get(i, s) - mx[i]) * (y.get(j, s) - my[j]);
                }
            }
        }
        cxy.scale_mut(1.0 / 49.0);
        assert!(p.cxy.max_abs_diff(&cxy) < 1e-12);
    }

    #[test]
    fn covariance_rejects_bad_inputs() {
        let x = Matrix::zeros(2, 3);
        assert!(covariance_pair(&x, &Matrix::zeros(2, 4), 0.0).is_err());
        assert!(covariance_pair(&Matrix::zeros(2, 1), &Matrix::zeros(2, 1), 0.0).is_err());
        assert!(covariance_pair(&x, &x, -1.0).is_err());
    }

    #[test]
    fn ridged_covariance_eigenvalues_respect_the_floor() {
        // Degenerate data: one sample direction only.
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]).unwrap();
        let r = 1e-3;
        let p = covariance_pair(&x, &x, r).unwrap();
        let e = sym_eig(&p.cxx).unwrap();
        for v in e.values {
            assert!(v >= r - 1e-12);
        }
    }
}
