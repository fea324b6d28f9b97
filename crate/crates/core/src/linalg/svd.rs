//! Thin singular value decomposition built on the symmetric
//! eigendecomposition.
//!
//! Right singular vectors come from the eigenvectors of `AᵀA`; each left
//! vector with a non-negligible singular value is recovered as `Av/σ`, which
//! fixes the relative signs so that `UΣVᵀ = A` holds exactly (also inside
//! degenerate singular-value clusters, where the eigenbasis of `AᵀA` is
//! arbitrary). Columns belonging to negligible singular values are completed
//! from the eigenvectors of `AAᵀ`, re-orthogonalized against the recovered
//! ones.

use crate::error::{Error, Result};
use crate::linalg::eig::sym_eig;
use crate::linalg::matrix::{dot, Matrix};

/// Singular values below `σ_max * SIGMA_RTOL` are reported as exactly zero
/// and their left vectors taken from the completion path. The Gram-matrix
/// route squares the condition number, so σ estimates below √ε·σ_max carry
/// no information; 1e-8 sits just above that floor.
const SIGMA_RTOL: f64 = 1e-8;

/// Thin SVD: `a = u · diag(singular_values) · vt` with `r = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// m×r, orthonormal columns.
    pub u: Matrix,
    /// Length r, descending, non-negative.
    pub singular_values: Vec<f64>,
    /// r×n, orthonormal rows.
    pub vt: Matrix,
}

/// Thin singular value decomposition of an arbitrary dense matrix.
pub fn svd(a: &Matrix) -> Result<Svd> {
    if a.rows() < a.cols() {
        // Decompose the transpose and swap factors.
        let s = svd_tall(&a.transpose())?;
        return Ok(Svd {
            u: s.vt.transpose(),
            singular_values: s.singular_values,
            vt: s.u.transpose(),
        });
    }
    svd_tall(a)
}

/// SVD for `rows ≥ cols`.
fn svd_tall(a: &Matrix) -> Result<Svd> {
    let (m, n) = a.shape();
    if n == 0 || m == 0 {
        return Ok(Svd {
            u: Matrix::zeros(m, 0.min(n)),
            singular_values: vec![],
            vt: Matrix::zeros(0, n),
        });
    }

    let gram = a.matmul_tn(a)?; // AᵀA, n×n
    let eig = sym_eig(&gram)?;
    let mut singular_values: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let v = eig.vectors; // n×n, columns ordered by descending σ

    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let cutoff = sigma_max * SIGMA_RTOL;
    for s in &mut singular_values {
        if *s <= cutoff {
            *s = 0.0;
        }
    }

    let mut u = Matrix::zeros(m, n);
    let mut deficient: Vec<usize> = Vec::new();
    for j in 0..n {
        if singular_values[j] > 0.0 {
            // u_j = A v_j / σ_j, renormalized to absorb round-off.
            let av = a.matmul(&column(&v, j))?;
            let norm = av.frobenius_norm();
            if norm > 0.0 {
                for i in 0..m {
                    u.set(i, j, av.get(i, 0) / norm);
                }
                continue;
            }
            deficient.push(j);
        } else {
            deficient.push(j);
        }
    }

    if !deficient.is_empty() {
        complete_columns(a, &mut u, &deficient, m, n)?;
    }

    Ok(Svd {
        u,
        singular_values,
        vt: v.transpose(),
    })
}

/// Fills the columns of `u` listed in `deficient` with vectors orthonormal
/// to all other columns, drawn from the eigenvectors of `AAᵀ` (falling back
/// to the standard basis, which can be needed when `AAᵀ`'s eigenbasis is
/// nearly parallel to already-placed columns).
fn complete_columns(
    a: &Matrix,
    u: &mut Matrix,
    deficient: &[usize],
    m: usize,
    n: usize,
) -> Result<()> {
    let outer = a.matmul_nt(a)?; // AAᵀ, m×m
    let eig = sym_eig(&outer)?;

    let placed: Vec<usize> = (0..n).filter(|j| !deficient.contains(j)).collect();
    let mut accepted: Vec<Vec<f64>> = placed.iter().map(|&j| u.col(j)).collect();

    let mut fill = deficient.iter().copied();
    let mut current = fill.next();
    for cand_idx in 0..m + m {
        let Some(target_col) = current else { break };
        let mut cand: Vec<f64> = if cand_idx < m {
            eig.vectors.col(cand_idx)
        } else {
            // Standard basis fallback.
            let mut e = vec![0.0; m];
            e[cand_idx - m] = 1.0;
            e
        };
        // Two Gram-Schmidt passes give orthogonality to machine precision.
        for _ in 0..2 {
            for col in &accepted {
                let proj = dot(&cand, col);
                for (ci, cv) in cand.iter_mut().zip(col) {
                    *ci -= proj * cv;
                }
            }
        }
        let norm = dot(&cand, &cand).sqrt();
        if norm > 1e-6 {
            for v in &mut cand {
                *v /= norm;
            }
            u.set_col(target_col, &cand);
            accepted.push(cand);
            current = fill.next();
        }
    }
    if current.is_some() {
        return Err(Error::Numerical(
            "svd failed to complete an orthonormal left basis".into(),
        ));
    }
    Ok(())
}

/// Column `j` as an n×1 matrix.
fn column(m: &Matrix, j: usize) -> Matrix {
    let col = m.col(j);
    Matrix::from_vec(col.len(), 1, col).expect("column buffer length matches")
}
