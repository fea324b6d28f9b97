//! Symmetric eigendecomposition via cyclic Jacobi rotations.
//!
//! Jacobi is quadratically convergent once the off-diagonal mass is small,
//! and every rotation is orthogonal, so the eigenvector matrix stays
//! orthonormal to machine precision. That accuracy matters here: the
//! downstream inverse square roots amplify any eigenvector error by 1/√λ.

use crate::error::{Error, Result};
use crate::linalg::matrix::Matrix;

/// Maximum number of full cyclic sweeps before giving up.
const MAX_SWEEPS: usize = 100;

/// Off-diagonal Frobenius norm target, relative to the matrix scale.
const OFF_DIAG_TOL: f64 = 1e-12;

/// Result of [`sym_eig`]: `values[i]` belongs to column `i` of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, ordered like `values`.
    pub vectors: Matrix,
}

/// Eigendecomposition of a symmetric matrix.
///
/// The input is symmetrized as `(A+Aᵀ)/2` first, which absorbs round-off
/// asymmetry from upstream products. Fails if `a` is not square, contains
/// non-finite values, or the sweep cap is reached before the off-diagonal
/// norm falls below `1e-12` relative to the matrix norm.
pub fn sym_eig(a: &Matrix) -> Result<SymEig> {
    if !a.is_square() {
        return Err(Error::dim("sym_eig", "square matrix", a.shape_str()));
    }
    if !a.all_finite() {
        return Err(Error::Numerical(
            "sym_eig input contains non-finite values".into(),
        ));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(SymEig {
            values: vec![],
            vectors: Matrix::zeros(0, 0),
        });
    }

    let mut b = a.symmetrized();
    let mut v = Matrix::identity(n);
    let tol = OFF_DIAG_TOL * b.frobenius_norm().max(1.0);

    let mut converged = n == 1;
    for _ in 0..MAX_SWEEPS {
        if off_diag_norm(&b) <= tol {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut b, &mut v, p, q);
            }
        }
    }
    if !converged && off_diag_norm(&b) > tol {
        return Err(Error::Numerical(format!(
            "sym_eig did not converge within {MAX_SWEEPS} sweeps (off-diagonal norm {:.3e}, target {:.3e})",
            off_diag_norm(&b),
            tol,
        )));
    }

    // Sort eigenpairs descending by value.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| b.get(j, j).partial_cmp(&b.get(i, i)).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| b.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, dst, v.get(r, src));
        }
    }
    Ok(SymEig { values, vectors })
}

/// One Jacobi rotation in the (p,q) plane: `B ← JᵀBJ`, `V ← VJ`.
fn rotate(b: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = b.get(p, q);
    if apq == 0.0 {
        return;
    }
    let n = b.rows();
    // Rutishauser's stable tangent formula.
    let theta = (b.get(q, q) - b.get(p, p)) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // Columns p and q of B (right-multiplication by J).
    for i in 0..n {
        let bip = b.get(i, p);
        let biq = b.get(i, q);
        b.set(i, p, c * bip - s * biq);
        b.set(i, q, s * bip + c * biq);
    }
    // Rows p and q of B (left-multiplication by Jᵀ).
    for j in 0..n {
        let bpj = b.get(p, j);
        let bqj = b.get(q, j);
        b.set(p, j, c * bpj - s * bqj);
        b.set(q, j, s * bpj + c * bqj);
    }
    // Analytically zero after the rotation; setting them kills round-off.
    b.set(p, q, 0.0);
    b.set(q, p, 0.0);

    for i in 0..n {
        let vip = v.get(i, p);
        let viq = v.get(i, q);
        v.set(i, p, c * vip - s * viq);
        v.set(i, q, s * vip + c * viq);
    }
}

/// √(Σ_{i≠j} b_ij²).
fn off_diag_norm(b: &Matrix) -> f64 {
    let n = b.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let v = b.get(i, j);
            s += 2.0 * v * v;
        }
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(e: &SymEig) -> Matrix {
        let n = e.values.len();
        let mut scaled = e.vectors.clone();
        for j in 0..n {
            for i in 0..n {
                let v = scaled.get(i, j) * e.values[j];
                scaled.set(i, j, v);
            }
        }
        scaled.matmul_nt(&e.vectors).unwrap()
    }

    #[test]
    fn diagonal_matrix_is_its_own_decomposition() {
        let e = sym_eig(&Matrix::from_diag(&[3.0, -1.0, 7.0])).unwrap();
        assert_eq!(e.values, vec![7.0, 3.0, -1.0]);
        let recon = reconstruct(&e);
        assert!(recon.max_abs_diff(&Matrix::from_diag(&[3.0, -1.0, 7.0])) < 1e-12);
    }

    #[test]
    fn two_by_two_known_eigenvalues() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1.
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = sym_eig(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvectors_are_orthonormal_and_reconstruct() {
        let a = Matrix::from_fn(12, 12, |i, j| ((i * 31 + j * 17) % 13) as f64 / 13.0);
        let a = a.symmetrized();
        let e = sym_eig(&a).unwrap();

        let vtv = e.vectors.matmul_tn(&e.vectors).unwrap();
        assert!(vtv.max_abs_diff(&Matrix::identity(12)) < 1e-10);
        assert!(reconstruct(&e).max_abs_diff(&a) < 1e-10);
        for w in e.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn large_scale_matrix_converges() {
        // Entries around 1e8; exercises the scale-relative stopping rule.
        let a = Matrix::from_fn(8, 8, |i, j| 1e8 * (1.0 + ((i + 2 * j) % 5) as f64));
        let a = a.symmetrized();
        let e = sym_eig(&a).unwrap();
        assert!(reconstruct(&e).max_abs_diff(&a) < 1e-4);
    }

    #[test]
    fn rejects_non_square_and_non_finite() {
        assert!(sym_eig(&Matrix::zeros(2, 3)).is_err());
        let mut a = Matrix::identity(2);
        a.set(0, 1, f64::NAN);
        assert!(sym_eig(&a).is_err());
    }
}
