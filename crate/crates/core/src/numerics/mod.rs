//! Dense complex-matrix kernels shared by the rest of the crate.
//!
//! Everything here works on [`ComplexMatrix`] values and is free of shared
//! state, so all functions may be called concurrently.

mod expm;
mod quadrature;
mod schur;
mod sylvester;

pub use expm::{block_exp_integral, block_exp_parts, mat_exp};
pub use quadrature::adaptive_simpson;
pub use schur::{ordered_invariant_subspace, ComplexSchur, EigenRegion, RegionClass};
pub use sylvester::solve_sylvester;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense complex matrix, stored column-major by nalgebra.
pub type ComplexMatrix = DMatrix<Complex64>;

/// Shorthand for a complex scalar.
pub type C64 = Complex64;

pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("matrix exponential overflow (1-norm {norm:e})")]
    ExpOverflow { norm: f64 },
    #[error("matrix is singular to working precision ({0})")]
    Singular(String),
    #[error("Schur iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("no {wanted}-dimensional invariant subspace in the requested region; eigenvalues: {eigenvalues:?}")]
    Selection {
        wanted: usize,
        available: usize,
        eigenvalues: Vec<C64>,
    },
    #[error("quadrature did not reach tolerance on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },
}

/// Tolerances used across the pipeline. Every field must be strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    /// Relative singular-value cutoff for rank decisions.
    pub rank_rtol: f64,
    /// Absolute Hermitian-deviation bound, multiplied by a problem scale.
    pub hermitian_atol: f64,
    /// Relative bound on the Riccati residual.
    pub riccati_rtol: f64,
    /// Relative tolerance for ODE integration and quadrature.
    pub ode_rtol: f64,
    /// Distance from an axis below which an eigenvalue counts as lying on it.
    pub axis_atol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            rank_rtol: 1e-10,
            hermitian_atol: 1e-10,
            riccati_rtol: 1e-10,
            ode_rtol: 1e-9,
            axis_atol: 1e-8,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<(), NumericsError> {
        let fields = [
            ("rank_rtol", self.rank_rtol),
            ("hermitian_atol", self.hermitian_atol),
            ("riccati_rtol", self.riccati_rtol),
            ("ode_rtol", self.ode_rtol),
            ("axis_atol", self.axis_atol),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(NumericsError::OutOfRange(format!(
                    "tolerance {name} must be strictly positive, got {value}"
                )));
            }
        }
        Ok(())
    }
}

pub fn ensure_square(m: &ComplexMatrix) -> Result<usize, NumericsError> {
    if m.nrows() != m.ncols() {
        return Err(NumericsError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

pub fn all_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Spectral (l2-induced) norm. Zero for empty matrices.
pub fn norm2(m: &ComplexMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Singular values, largest first.
pub fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Numerical rank with cutoff `rtol * sigma_max`.
pub fn numerical_rank(m: &ComplexMatrix, rtol: f64) -> usize {
    let sv = singular_values(m);
    match sv.first() {
        None => 0,
        Some(0.0) => 0,
        Some(&smax) => sv.iter().filter(|&&s| s > rtol * smax).count(),
    }
}

pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Largest entrywise modulus of `m - m^H`.
pub fn hermitian_deviation(m: &ComplexMatrix) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut ev: Vec<f64> = hermitian_part(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Outcome of a positive-definiteness test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Definiteness {
    pub positive: bool,
    /// Smallest eigenvalue of the Hermitian part (`+inf` for an empty matrix).
    pub min_eigenvalue: f64,
    pub hermitian_deviation: f64,
}

/// Positive definiteness: Hermitian within `hermitian_atol * max(1, |M|)` and
/// every eigenvalue strictly positive.
pub fn is_positive_definite(m: &ComplexMatrix, tol: &ToleranceConfig) -> Definiteness {
    if m.nrows() != m.ncols() {
        return Definiteness {
            positive: false,
            min_eigenvalue: f64::NAN,
            hermitian_deviation: f64::INFINITY,
        };
    }
    let dev = hermitian_deviation(m);
    let min_eigenvalue = hermitian_eigenvalues(m)
        .first()
        .copied()
        .unwrap_or(f64::INFINITY);
    let scale = norm2(m).max(1.0);
    Definiteness {
        positive: dev <= tol.hermitian_atol * scale && min_eigenvalue > 0.0,
        min_eigenvalue,
        hermitian_deviation: dev,
    }
}

/// Principal square root of a Hermitian positive definite matrix.
pub fn hermitian_sqrt(m: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    let n = ensure_square(m)?;
    if n == 0 {
        return Ok(m.clone());
    }
    let eig = hermitian_part(m).symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(NumericsError::Singular(
            "square root requires a positive definite matrix".into(),
        ));
    }
    let d = ComplexMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new(l.sqrt(), 0.0)));
    let v = &eig.eigenvectors;
    Ok(hermitian_part(&(v * d * v.adjoint())))
}

/// Inverse via LU, rejecting matrices whose reciprocal condition estimate is
/// below machine precision.
pub fn inverse(m: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    let n = ensure_square(m)?;
    if n == 0 {
        return Ok(m.clone());
    }
    let cond = condition_number(m);
    if !cond.is_finite() || cond > 1.0 / f64::EPSILON {
        return Err(NumericsError::Singular(format!("condition number {cond:e}")));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| NumericsError::Singular("LU inversion failed".into()))
}

/// Solve `m x = rhs` by LU.
pub fn solve(m: &ComplexMatrix, rhs: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    let n = ensure_square(m)?;
    if rhs.nrows() != n {
        return Err(NumericsError::DimensionMismatch(format!(
            "system of order {n} with right-hand side of {} rows",
            rhs.nrows()
        )));
    }
    if n == 0 {
        return Ok(rhs.clone());
    }
    m.clone()
        .lu()
        .solve(rhs)
        .filter(all_finite)
        .ok_or_else(|| NumericsError::Singular("LU solve failed".into()))
}

/// Solve `m x = rhs` for Hermitian positive definite `m` by Cholesky.
pub fn cholesky_solve(m: &ComplexMatrix, rhs: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    let n = ensure_square(m)?;
    if rhs.nrows() != n {
        return Err(NumericsError::DimensionMismatch(format!(
            "system of order {n} with right-hand side of {} rows",
            rhs.nrows()
        )));
    }
    if n == 0 {
        return Ok(rhs.clone());
    }
    let chol = hermitian_part(m)
        .cholesky()
        .ok_or_else(|| NumericsError::Singular("Cholesky factorization failed".into()))?;
    let x = chol.solve(rhs);
    if all_finite(&x) {
        Ok(x)
    } else {
        Err(NumericsError::Singular("Cholesky solve produced non-finite values".into()))
    }
}

/// 2-norm condition number `sigma_max / sigma_min` (`inf` when singular).
pub fn condition_number(m: &ComplexMatrix) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn scalar(z: C64) -> ComplexMatrix {
    ComplexMatrix::from_element(1, 1, z)
}

/// Eigenvalues of a general square matrix via the complex Schur form.
pub fn eigenvalues(m: &ComplexMatrix) -> Result<Vec<C64>, NumericsError> {
    Ok(ComplexSchur::new(m)?.eigenvalues())
}

/// Krylov block `[B, AB, ..., A^{n-1}B]`, with `A` rescaled to unit norm so
/// that high powers neither overflow nor vanish. The column span is unchanged.
pub fn krylov_matrix(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let n = a.nrows();
    let m = b.ncols();
    let mut k = ComplexMatrix::zeros(n, n * m);
    if n == 0 || m == 0 {
        return k;
    }
    let an = norm2(a);
    let a_scaled = if an > 0.0 { a / C64::new(an, 0.0) } else { a.clone() };
    let mut block = b.clone();
    for j in 0..n {
        k.view_mut((0, j * m), (n, m)).copy_from(&block);
        block = &a_scaled * block;
    }
    k
}

/// Orthonormal basis of the column span, via SVD with cutoff `rtol * sigma_max`.
pub fn range_basis(m: &ComplexMatrix, rtol: f64) -> ComplexMatrix {
    let rows = m.nrows();
    if m.is_empty() {
        return ComplexMatrix::zeros(rows, 0);
    }
    let mut svd = m.clone().svd(true, false);
    svd.sort_by_singular_values();
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let r = if smax == 0.0 {
        0
    } else {
        svd.singular_values.iter().filter(|&&s| s > rtol * smax).count()
    };
    let u = svd.u.expect("left singular vectors requested");
    u.columns(0, r).into_owned()
}

/// Maximum entrywise distance between two matrices of the same shape.
pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
