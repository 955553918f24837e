//! Dense complex linear algebra used by every numeric module.
//!
//! `ComplexMatrix` wraps a heap-allocated nalgebra matrix. The decompositions
//! here are thin: the backing library does the factorisation, this module fixes
//! ordering, phase and error semantics so callers never see library details.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,
    #[error("expected {expected} entries for the requested shape, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("matrix must have at least one row and one column")]
    Empty,
}

/// Dense complex matrix, row-major in its public constructors.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    inner: DMatrix<Complex64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ComplexMatrix({}x{}) {}",
            self.rows(),
            self.cols(),
            self.inner
        )
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            inner: DMatrix::zeros(rows, cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: DMatrix::identity(n, n),
        }
    }

    pub fn from_row_major(
        rows: usize,
        cols: usize,
        entries: Vec<Complex64>,
    ) -> Result<Self, MatrixError> {
        if rows == 0 || cols == 0 {
            return Err(MatrixError::Empty);
        }
        if entries.len() != rows * cols {
            return Err(MatrixError::ShapeMismatch {
                expected: rows * cols,
                got: entries.len(),
            });
        }
        Ok(Self {
            inner: DMatrix::from_row_slice(rows, cols, &entries),
        })
    }

    /// Real matrix given as rows, convenient for tests and fixtures.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self, MatrixError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let entries = rows
            .iter()
            .flat_map(|row| row.iter().map(|&x| Complex64::new(x, 0.0)))
            .collect();
        Self::from_row_major(r, c, entries)
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self {
            inner: DMatrix::from_fn(rows, cols, f),
        }
    }

    pub fn from_diagonal(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(values[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
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

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.inner[(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.inner[(row, col)] = value;
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<Complex64> {
        self.inner.transpose().iter().copied().collect()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            inner: self.inner.adjoint(),
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            inner: self.inner.map(|z| z * factor),
        }
    }

    pub fn column(&self, j: usize) -> Self {
        Self {
            inner: self.inner.columns(j, 1).into_owned(),
        }
    }

    /// Columns `start..start + count` as a new matrix.
    pub fn columns(&self, start: usize, count: usize) -> Self {
        Self {
            inner: self.inner.columns(start, count).into_owned(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    pub fn norm_squared(&self) -> f64 {
        self.inner.norm_squared()
    }

    pub fn trace(&self) -> Complex64 {
        self.inner.trace()
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.inner
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    /// Largest entrywise deviation from Hermitian symmetry.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        (&self.inner - self.inner.adjoint())
            .iter()
            .fold(0.0, |acc, z| acc.max(z.norm()))
    }

    /// Gram matrix `self^H · self`.
    pub fn gram(&self) -> Self {
        Self {
            inner: self.inner.ad_mul(&self.inner),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix {
            inner: &self.inner * &rhs.inner,
        }
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix {
            inner: &self.inner + &rhs.inner,
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix {
            inner: &self.inner - &rhs.inner,
        }
    }
}

/// Eigenvalues in non-increasing order with matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

/// Dominant singular value with its left (`u`) and right (`v`) singular vectors.
#[derive(Debug, Clone)]
pub struct SingularTriplet {
    pub sigma_max: f64,
    pub u: ComplexMatrix,
    pub v: ComplexMatrix,
}

/// Rotate a column so its first non-negligible entry is real and positive.
fn unit_phase_of(col: nalgebra::DVectorView<'_, Complex64>) -> Complex64 {
    let scale = col.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
    match col
        .iter()
        .find(|z| z.norm() > 1e-12 * scale.max(f64::MIN_POSITIVE))
    {
        Some(z) => z.conj() / z.norm(),
        None => Complex64::new(1.0, 0.0),
    }
}

/// Hermitian eigendecomposition. The input is symmetrised as `(m + m^H)/2`
/// before factorisation.
pub fn hermitian_eig(m: &ComplexMatrix) -> Result<EigenPair, MatrixError> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(MatrixError::NonSquare { rows, cols });
    }
    if rows == 0 {
        return Err(MatrixError::Empty);
    }
    if !m.is_finite() {
        return Err(MatrixError::NonFinite);
    }
    let sym = (&m.inner + m.inner.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();

    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(rows, rows);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let phase = unit_phase_of(col.as_view());
        vectors.set_column(dst, &(col * phase));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MatrixError::NonFinite);
    }
    Ok(EigenPair {
        values,
        vectors: ComplexMatrix { inner: vectors },
    })
}

/// Largest singular value and its singular vectors, computed by SVD.
///
/// The right vector is phase-normalised (first non-negligible entry real
/// positive) and the left vector carries the same rotation, so
/// `m·v = sigma_max·u` holds exactly up to rounding.
pub fn top_singular_triplet(m: &ComplexMatrix) -> Result<SingularTriplet, MatrixError> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(MatrixError::Empty);
    }
    if !m.is_finite() {
        return Err(MatrixError::NonFinite);
    }
    if m.max_abs() == 0.0 {
        let mut u = DMatrix::zeros(rows, 1);
        u[(0, 0)] = Complex64::new(1.0, 0.0);
        let mut v = DMatrix::zeros(cols, 1);
        v[(0, 0)] = Complex64::new(1.0, 0.0);
        return Ok(SingularTriplet {
            sigma_max: 0.0,
            u: ComplexMatrix { inner: u },
            v: ComplexMatrix { inner: v },
        });
    }
    let svd = m.inner.clone().svd(true, true);
    let (Some(u_all), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(MatrixError::NonFinite);
    };
    let k = svd
        .singular_values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let sigma_max = svd.singular_values[k];
    let v_col: DMatrix<Complex64> = v_t.rows(k, 1).adjoint();
    let u_col: DMatrix<Complex64> = u_all.columns(k, 1).into_owned();
    let phase = unit_phase_of(v_col.column(0));
    let v = v_col * phase;
    let u = u_col * phase;
    if !sigma_max.is_finite() {
        return Err(MatrixError::NonFinite);
    }
    Ok(SingularTriplet {
        sigma_max,
        u: ComplexMatrix { inner: u },
        v: ComplexMatrix { inner: v },
    })
}

/// I.i.d. circularly-symmetric complex Gaussian entries with unit variance.
/// Entries are drawn in row-major order.
pub fn gaussian_complex<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut inner = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            inner[(i, j)] = Complex64::new(re * s, im * s);
        }
    }
    ComplexMatrix { inner }
}

/// In place: m <- keep * m + fresh * W with W drawn as in [`gaussian_complex`].
pub fn blend_gaussian<R: Rng + ?Sized>(m: &mut ComplexMatrix, keep: f64, fresh: f64, rng: &mut R) {
    let s = fresh * std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let x = &mut m.inner[(i, j)];
            *x = *x * keep + Complex64::new(re * s, im * s);
        }
    }
}
