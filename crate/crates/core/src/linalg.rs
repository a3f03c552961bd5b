//! Dense linear-algebra kernel.
//!
//! Everything here operates on [`Matrix`], a finite-valued dense matrix, and
//! goes through a sorted thin SVD. Hard thresholding keeps singular values
//! that are greater than *or equal to* the threshold.

use std::fmt;
use std::ops::{Add, Index, Mul, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative cutoff used to decide numerical rank for projectors and
/// pseudo-inverses: singular values at or below `RANK_CUTOFF * sigma_1` are
/// treated as zero.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Dense real matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    inner: DMatrix<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if entries.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Self::from_dmatrix(DMatrix::from_row_slice(rows, cols, entries))
    }

    /// Wraps an nalgebra matrix, rejecting non-finite entries.
    pub fn from_dmatrix(inner: DMatrix<f64>) -> Result<Self> {
        if let Some(pos) = inner.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % inner.nrows(), pos / inner.nrows());
            return Err(Error::InvalidInput(format!(
                "non-finite entry {} at ({r}, {c})",
                inner[(r, c)]
            )));
        }
        Ok(Self { inner })
    }

    pub(crate) fn wrap(inner: DMatrix<f64>) -> Self {
        Self { inner }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::wrap(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self::wrap(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(rows: usize, cols: usize, diag: &[f64]) -> Self {
        let mut m = DMatrix::zeros(rows, cols);
        for (i, &d) in diag.iter().enumerate().take(rows.min(cols)) {
            m[(i, i)] = d;
        }
        Self::wrap(m)
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self::wrap(DMatrix::from_fn(rows, cols, f))
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for r in 0..self.rows() {
            out.extend(self.inner.row(r).iter());
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::wrap(self.inner.transpose())
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::wrap(&self.inner * factor)
    }

    /// `tr(self^T other)`.
    pub fn inner(&self, other: &Matrix) -> f64 {
        self.inner.dot(&other.inner)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.amax()
    }

    pub(crate) fn add_at(&mut self, row: usize, col: usize, value: f64) {
        self.inner[(row, col)] += value;
    }

    pub(crate) fn column_axpy(&mut self, col: usize, alpha: f64, x: &[f64]) {
        let mut column = self.inner.column_mut(col);
        for (dst, &v) in column.iter_mut().zip(x) {
            *dst += alpha * v;
        }
    }

    pub(crate) fn add_scaled(&mut self, alpha: f64, other: &Matrix) {
        self.inner += &other.inner * alpha;
    }

    fn check_same_shape(&self, other: &Matrix, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn try_sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "subtraction")?;
        Ok(self - other)
    }

    pub fn try_mul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols() != other.rows() {
            return Err(Error::DimensionMismatch(format!(
                "product of {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(self * other)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} {:?}", self.rows(), self.cols(), self.to_row_major())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.inner[idx]
    }
}

impl<'a> Add<&'a Matrix> for &'a Matrix {
    type Output = Matrix;

    fn add(self, rhs: &'a Matrix) -> Matrix {
        Matrix::wrap(&self.inner + &rhs.inner)
    }
}

impl<'a> Sub<&'a Matrix> for &'a Matrix {
    type Output = Matrix;

    fn sub(self, rhs: &'a Matrix) -> Matrix {
        Matrix::wrap(&self.inner - &rhs.inner)
    }
}

impl<'a> Mul<&'a Matrix> for &'a Matrix {
    type Output = Matrix;

    fn mul(self, rhs: &'a Matrix) -> Matrix {
        Matrix::wrap(&self.inner * &rhs.inner)
    }
}

/// Thin singular value decomposition with singular values in non-increasing
/// order.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `m1 x k` orthonormal columns.
    pub left_vectors: Matrix,
    pub singular_values: Vec<f64>,
    /// `m2 x k` orthonormal columns.
    pub right_vectors: Matrix,
}

impl Svd {
    pub fn rank_above(&self, cutoff: f64) -> usize {
        self.singular_values.iter().filter(|&&s| s > cutoff).count()
    }

    /// Number of singular values above `RANK_CUTOFF * sigma_1`.
    pub fn numerical_rank(&self) -> usize {
        match self.singular_values.first() {
            Some(&s1) if s1 > 0.0 => self.rank_above(RANK_CUTOFF * s1),
            _ => 0,
        }
    }

    /// Sum of the leading `k` rank-one terms.
    pub fn truncate(&self, k: usize) -> Matrix {
        let (m1, m2) = (self.left_vectors.rows(), self.right_vectors.rows());
        if k == 0 {
            return Matrix::zeros(m1, m2);
        }
        let u = self.left_vectors.inner.columns(0, k);
        let v = self.right_vectors.inner.columns(0, k);
        let sigma = DVector::from_column_slice(&self.singular_values[..k]);
        let scaled = u * DMatrix::from_diagonal(&sigma);
        Matrix::wrap(scaled * v.transpose())
    }
}

/// Thin SVD of `a`, `k = min(rows, cols)`.
pub fn svd(a: &Matrix) -> Result<Svd> {
    if a.inner.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("svd of a non-finite matrix".into()));
    }
    let (rows, cols) = a.shape();
    let source = faer::Mat::<f64>::from_fn(rows, cols, |i, j| a.inner[(i, j)]);
    let decomposition = source
        .thin_svd()
        .map_err(|e| Error::Numeric(format!("SVD did not converge for a {rows}x{cols} matrix: {e:?}")))?;
    let (u, v) = (decomposition.U(), decomposition.V());
    let s = decomposition.S().column_vector();
    let k = rows.min(cols);
    let singular_values: Vec<f64> = (0..k).map(|j| s[j]).collect();
    debug_assert!(singular_values.windows(2).all(|w| w[0] >= w[1]));
    Ok(Svd {
        left_vectors: Matrix::wrap(DMatrix::from_fn(rows, k, |i, j| u[(i, j)])),
        singular_values,
        right_vectors: Matrix::wrap(DMatrix::from_fn(cols, k, |i, j| v[(i, j)])),
    })
}

/// Largest singular value.
pub fn spectral_norm(a: &Matrix) -> Result<f64> {
    Ok(svd(a)?.singular_values.first().copied().unwrap_or(0.0))
}

/// Schatten-q norm computed from singular values; `q = f64::INFINITY` gives
/// the largest one.
pub fn schatten_from_values(singular_values: &[f64], q: f64) -> Result<f64> {
    if q.is_nan() || q <= 0.0 {
        return Err(Error::param("q", format!("Schatten index must be positive, got {q}")));
    }
    if q == f64::INFINITY {
        return Ok(singular_values.iter().copied().fold(0.0, f64::max));
    }
    // Scale by the largest value so large q does not overflow.
    let top = singular_values.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(0.0);
    }
    let sum: f64 = singular_values.iter().map(|s| (s / top).powf(q)).sum();
    Ok(top * sum.powf(1.0 / q))
}

pub fn schatten_norm(a: &Matrix, q: f64) -> Result<f64> {
    if q.is_nan() || q <= 0.0 {
        return Err(Error::param("q", format!("Schatten index must be positive, got {q}")));
    }
    schatten_from_values(&svd(a)?.singular_values, q)
}

/// Number of singular values kept by a threshold `tau`.
pub fn kept_count(singular_values: &[f64], tau: f64) -> usize {
    singular_values.iter().take_while(|&&s| s >= tau).count()
}

/// Keeps every SVD term with `sigma_j >= tau`.
pub fn hard_threshold(a: &Matrix, tau: f64) -> Result<(Matrix, usize)> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::param(
            "tau",
            format!("threshold must be non-negative, got {tau}"),
        ));
    }
    let decomposition = svd(a)?;
    let kept = kept_count(&decomposition.singular_values, tau);
    Ok((decomposition.truncate(kept), kept))
}

/// Best rank-`k` approximation in Frobenius norm.
pub fn restricted_rank_approx(a: &Matrix, k: usize) -> Result<Matrix> {
    let max_rank = a.rows().min(a.cols());
    if k > max_rank {
        return Err(Error::param(
            "k",
            format!("rank {k} exceeds min(rows, cols) = {max_rank}"),
        ));
    }
    Ok(svd(a)?.truncate(k))
}

/// Orthogonal projector onto the column span of `v`.
pub fn column_projector(v: &Matrix) -> Result<Matrix> {
    let decomposition = svd(v)?;
    let rank = decomposition.numerical_rank();
    let basis = decomposition.left_vectors.inner.columns(0, rank);
    Ok(Matrix::wrap(basis * basis.transpose()))
}

/// Moore-Penrose pseudo-inverse with relative singular-value cutoff
/// [`RANK_CUTOFF`].
pub fn pseudo_inverse(v: &Matrix) -> Result<Matrix> {
    let decomposition = svd(v)?;
    let rank = decomposition.numerical_rank();
    let mut out = DMatrix::zeros(v.cols(), v.rows());
    for j in 0..rank {
        let s = decomposition.singular_values[j];
        let vj = decomposition.right_vectors.inner.column(j);
        let uj = decomposition.left_vectors.inner.column(j);
        out += (vj * uj.transpose()) / s;
    }
    Ok(Matrix::wrap(out))
}
