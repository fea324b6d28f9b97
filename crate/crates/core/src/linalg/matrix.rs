//! Dense row-major matrix with the multiply kernels the rest of the crate
//! builds on.
//!
//! The three `gemm_*` kernels cover the access patterns that occur in
//! forward/backward passes (`A·B`, `A·Bᵀ`, `Aᵀ·B`) without ever
//! materializing a transpose. They process four output rows at a time so a
//! loaded row of `B` is reused across four accumulator streams; with `-O`
//! the inner loops vectorize and a single core sustains multi-GFLOP/s,
//! which the training budgets rely on.

use crate::error::{Error, Result};

/// Dense `f64` matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds from a row-major buffer; `data.len()` must equal `rows*cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "Matrix::from_vec",
                format!("{} elements for {rows}x{cols}", rows * cols),
                format!("{}", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds from row slices; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::dim(
                    "Matrix::from_rows",
                    format!("row of length {c}"),
                    format!("row {i} of length {}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    /// n×n identity.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Square matrix with `d` on the diagonal.
    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = d[i];
        }
        m
    }

    /// Element-wise construction.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Human-readable shape, for error messages.
    pub fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copies column `j` out.
    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[f64]) {
        debug_assert_eq!(v.len(), self.rows);
        for i in 0..self.rows {
            self.set(i, j, v[i]);
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dim(
                "matmul",
                format!("inner dimension {}", self.cols),
                format!("{} x {}", self.shape_str(), other.shape_str()),
            ));
        }
        let mut c = Matrix::zeros(self.rows, other.cols);
        gemm_nn(
            self.rows, self.cols, other.cols,
            &self.data, &other.data, &mut c.data,
            false,
        );
        Ok(c)
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::dim(
                "matmul_nt",
                format!("inner dimension {}", self.cols),
                format!("{} x {}ᵀ", self.shape_str(), other.shape_str()),
            ));
        }
        let mut c = Matrix::zeros(self.rows, other.rows);
        gemm_nt(
            self.rows, self.cols, other.rows,
            &self.data, &other.data, &mut c.data,
            false,
        );
        Ok(c)
    }

    /// `selfᵀ · other`.
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::dim(
                "matmul_tn",
                format!("inner dimension {}", self.rows),
                format!("{}ᵀ x {}", self.shape_str(), other.shape_str()),
            ));
        }
        let mut c = Matrix::zeros(self.cols, other.cols);
        gemm_tn(
            self.cols, self.rows, other.cols,
            &self.data, &other.data, &mut c.data,
            false,
        );
        Ok(c)
    }

    /// Element-wise sum.
    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    /// Element-wise difference.
    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &Matrix,
        context: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::dim(context, self.shape_str(), other.shape_str()));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Returns `self * s`.
    pub fn scaled(&self, s: f64) -> Matrix {
        let mut m = self.clone();
        m.scale_mut(s);
        m
    }

    pub fn scale_mut(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Adds `v` to every diagonal element (square matrices only).
    pub fn add_diag_mut(&mut self, v: f64) {
        debug_assert!(self.is_square());
        let n = self.rows;
        for i in 0..n {
            self.data[i * n + i] += v;
        }
    }

    /// `(A + Aᵀ)/2`; absorbs round-off asymmetry before eigendecomposition.
    pub fn symmetrized(&self) -> Matrix {
        debug_assert!(self.is_square());
        let n = self.rows;
        Matrix::from_fn(n, n, |i, j| {
            0.5 * (self.data[i * n + j] + self.data[j * n + i])
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute element difference; the workhorse of numeric tests.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Mean over columns for each row.
    pub fn row_means(&self) -> Vec<f64> {
        let inv = 1.0 / self.cols as f64;
        (0..self.rows)
            .map(|i| self.row(i).iter().sum::<f64>() * inv)
            .collect()
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Columns `[lo, hi)` as a new matrix.
    pub fn col_range(&self, lo: usize, hi: usize) -> Matrix {
        debug_assert!(lo <= hi && hi <= self.cols);
        let mut m = Matrix::zeros(self.rows, hi - lo);
        for i in 0..self.rows {
            m.row_mut(i).copy_from_slice(&self.row(i)[lo..hi]);
        }
        m
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// How many rows of the output each kernel iteration produces.
const ROW_BLOCK: usize = 4;

/// `c (+)= a · b` where `a` is m×k, `b` is k×n, `c` is m×n.
pub fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if !accumulate {
        c.fill(0.0);
    }
    if n == 0 || k == 0 {
        return;
    }
    let mut i = 0;
    while i + ROW_BLOCK <= m {
        let (c0, rest) = c[i * n..].split_at_mut(n);
        let (c1, rest) = rest.split_at_mut(n);
        let (c2, rest) = rest.split_at_mut(n);
        let c3 = &mut rest[..n];
        for l in 0..k {
            let a0 = a[i * k + l];
            let a1 = a[(i + 1) * k + l];
            let a2 = a[(i + 2) * k + l];
            let a3 = a[(i + 3) * k + l];
            let br = &b[l * n..l * n + n];
            for j in 0..n {
                let bv = br[j];
                c0[j] += a0 * bv;
                c1[j] += a1 * bv;
                c2[j] += a2 * bv;
                c3[j] += a3 * bv;
            }
        }
        i += ROW_BLOCK;
    }
    while i < m {
        let ci = &mut c[i * n..(i + 1) * n];
        for l in 0..k {
            let av = a[i * k + l];
            let br = &b[l * n..l * n + n];
            for j in 0..n {
                ci[j] += av * br[j];
            }
        }
        i += 1;
    }
}

/// `c (+)= a · bᵀ` where `a` is m×k, `b` is n×k, `c` is m×n.
pub fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    if !accumulate {
        c.fill(0.0);
    }
    if k == 0 {
        return;
    }
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        let ci = &mut c[i * n..(i + 1) * n];
        for j in 0..n {
            ci[j] += dot(ar, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `c (+)= aᵀ · b` where `a` is k×m, `b` is k×n, `c` is m×n.
pub fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], accumulate: bool) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if !accumulate {
        c.fill(0.0);
    }
    if n == 0 {
        return;
    }
    for l in 0..k {
        let ar = &a[l * m..(l + 1) * m];
        let br = &b[l * n..(l + 1) * n];
        let mut i = 0;
        while i + ROW_BLOCK <= m {
            let a0 = ar[i];
            let a1 = ar[i + 1];
            let a2 = ar[i + 2];
            let a3 = ar[i + 3];
            let (c0, rest) = c[i * n..].split_at_mut(n);
            let (c1, rest) = rest.split_at_mut(n);
            let (c2, rest) = rest.split_at_mut(n);
            let c3 = &mut rest[..n];
            for j in 0..n {
                let bv = br[j];
                c0[j] += a0 * bv;
                c1[j] += a1 * bv;
                c2[j] += a2 * bv;
                c3[j] += a3 * bv;
            }
            i += ROW_BLOCK;
        }
        while i < m {
            let av = ar[i];
            let ci = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                ci[j] += av * br[j];
            }
            i += 1;
        }
    }
}

/// Dot product with four accumulator streams so the reduction vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut c = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for l in 0..a.cols() {
                    s += a.get(i, l) * b.get(l, j);
                }
                c.set(i, j, s);
            }
        }
        c
    }

    fn arbitrary(rows: usize, cols: usize, seed: u64) -> Matrix {
        // Small deterministic LCG; avoids pulling rand into unit tests.
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        Matrix::from_fn(rows, cols, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn matmul_matches_naive_all_block_remainders() {
        for m in [1, 3, 4, 5, 9] {
            for k in [1, 2, 7] {
                for n in [1, 3, 8] {
                    let a = arbitrary(m, k, (m * 100 + k * 10 + n) as u64);
                    let b = arbitrary(k, n, (m + k + n) as u64);
                    let c = a.matmul(&b).unwrap();
                    assert!(c.max_abs_diff(&naive_matmul(&a, &b)) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn transposed_kernels_match_explicit_transpose() {
        let a = arbitrary(5, 7, 1);
        let b = arbitrary(6, 7, 2);
        let nt = a.matmul_nt(&b).unwrap();
        assert!(nt.max_abs_diff(&a.matmul(&b.transpose()).unwrap()) < 1e-12);

        let c = arbitrary(7, 5, 3);
        let d = arbitrary(7, 6, 4);
        let tn = c.matmul_tn(&d).unwrap();
        assert!(tn.max_abs_diff(&c.transpose().matmul(&d).unwrap()) < 1e-12);
    }

    #[test]
    fn gemm_accumulate_adds_to_existing_contents() {
        let a = arbitrary(4, 4, 5);
        let b = arbitrary(4, 4, 6);
        let base = a.matmul(&b).unwrap();
        let mut c = base.clone().into_data();
        gemm_nn(4, 4, 4, a.data(), b.data(), &mut c, true);
        let doubled = Matrix::from_vec(4, 4, c).unwrap();
        assert!(doubled.max_abs_diff(&base.scaled(2.0)) < 1e-12);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(a.matmul(&b).is_err());
        assert!(a.add(&Matrix::zeros(3, 2)).is_err());
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn identity_is_multiplicative_neutral() {
        let a = arbitrary(6, 6, 7);
        let i = Matrix::identity(6);
        assert!(a.matmul(&i).unwrap().max_abs_diff(&a) < 1e-15);
        assert!(i.matmul(&a).unwrap().max_abs_diff(&a) < 1e-15);
    }
}
