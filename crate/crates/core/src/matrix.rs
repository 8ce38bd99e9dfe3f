//! Dense complex linear algebra used throughout the crate.
//!
//! Two matrix newtypes wrap `nalgebra::DMatrix<Complex<f64>>`:
//! [`ComplexMatrix`] for general rectangular matrices (channels, precoders)
//! and [`HermitianMatrix`] for covariances and resolvents. Hermitian
//! construction always symmetrizes its input as `(A + A^H) / 2`.

use nalgebra::DMatrix;
pub use nalgebra::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Relative tolerance on the Hermitian symmetry check.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues in `[-PSD_TOL * scale, 0)` are clamped to zero by [`psd_sqrt`].
pub const PSD_TOL: f64 = 1e-9;

fn check_finite(m: &DMatrix<C64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// General dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl ComplexMatrix {
    /// Builds a matrix from row-major entries.
    pub fn new(rows: usize, cols: usize, entries: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("matrix dimensions must be positive".into()));
        }
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: entries.len(),
            });
        }
        Self::from_dmatrix(DMatrix::from_row_slice(rows, cols, &entries))
    }

    pub fn from_dmatrix(m: DMatrix<C64>) -> Result<Self> {
        check_finite(&m)?;
        Ok(Self(m))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Result<Self> {
        if self.cols() != other.rows() {
            return Err(Error::DimensionMismatch {
                expected: self.cols(),
                got: other.rows(),
            });
        }
        Ok(Self(&self.0 * &other.0))
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }
}

/// Dense complex Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(DMatrix<C64>);

impl HermitianMatrix {
    /// Symmetrizes `m` as `(m + m^H) / 2`.
    pub fn from_dmatrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidInput("matrix dimension must be positive".into()));
        }
        check_finite(&m)?;
        let sym = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        Ok(Self(sym))
    }

    /// Row-major entries, symmetrized.
    pub fn new(dim: usize, entries: Vec<C64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        if dim == 0 {
            return Err(Error::InvalidInput("matrix dimension must be positive".into()));
        }
        Self::from_dmatrix(DMatrix::from_row_slice(dim, dim, &entries))
    }

    /// Wraps a matrix the caller guarantees to be exactly Hermitian.
    pub(crate) fn from_hermitian_unchecked(m: DMatrix<C64>) -> Self {
        Self(m)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn to_complex(&self) -> ComplexMatrix {
        ComplexMatrix(self.0.clone())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(&self.0 * C64::new(s, 0.0))
    }

    pub fn add(&self, other: &HermitianMatrix) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self(&self.0 + &other.0))
    }

    /// Adds `s * I` in place.
    pub fn shift_diagonal(&mut self, s: f64) {
        for i in 0..self.dim() {
            self.0[(i, i)].re += s;
        }
    }

    /// Adds `s * other` in place.
    pub fn axpy(&mut self, s: f64, other: &HermitianMatrix) -> Result<()> {
        check_dims(self.dim(), other.dim())?;
        self.0.zip_apply(&other.0, |a, b| *a += b * s);
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    /// Whether `max |A_ij - conj(A_ji)| <= 1e-10 (1 + max |A_ij|)`.
    pub fn is_hermitian(&self) -> bool {
        let n = self.dim();
        let bound = HERMITIAN_TOL * (1.0 + self.max_abs());
        (0..n).all(|i| (0..n).all(|j| (self.0[(i, j)] - self.0[(j, i)].conj()).norm() <= bound))
    }

    /// Ascending eigenvalues and the matching unitary eigenvector matrix.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<C64>) {
        let eig = self.0.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(self.dim(), self.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
        (values, vectors)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen().0
    }

    /// Hermitian product `A * B` (only valid when the product is Hermitian,
    /// e.g. commuting arguments); symmetrizes the result.
    pub fn mul_symmetrized(&self, other: &HermitianMatrix) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Self::from_dmatrix(&self.0 * &other.0)
    }
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Hermitian PSD square root via eigendecomposition, clamping slightly
/// negative eigenvalues to zero.
pub fn psd_sqrt(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    let (values, vectors) = a.eigen();
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = values.first().copied().unwrap_or(0.0);
    if min < -PSD_TOL * scale {
        return Err(Error::NotPsd { eigenvalue: min, scale });
    }
    let n = a.dim();
    let mut scaled = vectors.clone();
    for (c, &v) in values.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        for r in 0..n {
            scaled[(r, c)] *= s;
        }
    }
    HermitianMatrix::from_dmatrix(&scaled * vectors.adjoint())
}

fn cholesky(a: &HermitianMatrix) -> Result<nalgebra::Cholesky<C64, nalgebra::Dyn>> {
    let chol = nalgebra::Cholesky::new(a.0.clone()).ok_or(Error::NotPd)?;
    // nalgebra takes complex square roots of the pivots, so a negative pivot
    // shows up as a (nearly) imaginary diagonal entry rather than a failure.
    let l = chol.l_dirty();
    for i in 0..a.dim() {
        let d = l[(i, i)];
        if !(d.re > 0.0 && d.re.is_finite()) || d.im.abs() > 1e-12 * d.re.max(1.0) {
            return Err(Error::NotPd);
        }
    }
    Ok(chol)
}

/// `log det A` in nats for Hermitian positive definite `A`.
pub fn logdet_hpd(a: &HermitianMatrix) -> Result<f64> {
    let chol = cholesky(a)?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..a.dim() {
        let d = l[(i, i)].re;
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotPd);
        }
        acc += d.ln();
    }
    Ok(2.0 * acc)
}

/// Solves `A X = B` for Hermitian positive definite `A`.
pub fn solve_hpd(a: &HermitianMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_dims(a.dim(), b.rows())?;
    let chol = cholesky(a)?;
    Ok(ComplexMatrix(chol.solve(&b.0)))
}

/// `A^{-1}` for Hermitian positive definite `A`.
pub fn inverse_hpd(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    let inv = cholesky(a)?.inverse();
    HermitianMatrix::from_dmatrix(inv)
}

/// `tr(A B) = sum_ij A_ij B_ji` without forming the product.
pub fn trace_product(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<C64> {
    check_dims(a.dim(), b.dim())?;
    Ok(trace_product_raw(&a.0, &b.0))
}

pub(crate) fn trace_product_raw(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}
