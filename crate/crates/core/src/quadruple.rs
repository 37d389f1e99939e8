//! Generating quadruples `(alpha, S0, theta1, theta2)` tied by
//! `alpha S0 - S0 alpha^H = i (theta1 theta1^H - theta2 theta2^H)`.

use serde::Serialize;
use thiserror::Error;

use crate::numerics::{
    self, cholesky_solve, hermitian_deviation, hermitian_part, hermitian_sqrt, is_positive_definite,
    norm2, ComplexMatrix, NumericsError, ToleranceConfig, C64, I,
};
use crate::realization::{controllability_rank, Realization};
use crate::riccati::{verify_solution, RiccatiSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadrupleError {
    #[error("invalid quadruple dimensions: {0}")]
    Dimension(String),
    #[error("S0 is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },
    #[error("H must be Hermitian (deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("Riccati solution failed verification: {0}")]
    Verification(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quadruple {
    alpha: ComplexMatrix,
    s0: ComplexMatrix,
    theta1: ComplexMatrix,
    theta2: ComplexMatrix,
}

fn check_block_dims(
    square: [(&str, &ComplexMatrix); 2],
    theta1: &ComplexMatrix,
    theta2: &ComplexMatrix,
) -> Result<(), QuadrupleError> {
    let n = square[0].1.nrows();
    for (name, m) in square {
        if m.shape() != (n, n) {
            return Err(QuadrupleError::Dimension(format!("{name} must be {n}x{n}, got {:?}", m.shape())));
        }
    }
    for (name, m) in [("theta1", theta1), ("theta2", theta2)] {
        if m.nrows() != n || m.ncols() == 0 {
            return Err(QuadrupleError::Dimension(format!(
                "{name} must have {n} rows and at least one column, got {:?}",
                m.shape()
            )));
        }
    }
    for (name, m) in square.iter().copied().chain([("theta1", theta1), ("theta2", theta2)]) {
        if !numerics::all_finite(m) {
            return Err(QuadrupleError::Dimension(format!("{name} has non-finite entries")));
        }
    }
    Ok(())
}

impl Quadruple {
    /// Checks shapes and finiteness only; see [`classify`] for admissibility.
    pub fn new(
        alpha: ComplexMatrix,
        s0: ComplexMatrix,
        theta1: ComplexMatrix,
        theta2: ComplexMatrix,
    ) -> Result<Self, QuadrupleError> {
        check_block_dims([("alpha", &alpha), ("S0", &s0)], &theta1, &theta2)?;
        Ok(Self { alpha, s0, theta1, theta2 })
    }

    pub fn alpha(&self) -> &ComplexMatrix {
        &self.alpha
    }
    pub fn s0(&self) -> &ComplexMatrix {
        &self.s0
    }
    pub fn theta1(&self) -> &ComplexMatrix {
        &self.theta1
    }
    pub fn theta2(&self) -> &ComplexMatrix {
        &self.theta2
    }
    pub fn n(&self) -> usize {
        self.alpha.nrows()
    }
    pub fn m1(&self) -> usize {
        self.theta1.ncols()
    }
    pub fn m2(&self) -> usize {
        self.theta2.ncols()
    }

    /// `i (theta1 theta1^H - theta2 theta2^H)`.
    pub fn k_matrix(&self) -> ComplexMatrix {
        (&self.theta1 * self.theta1.adjoint() - &self.theta2 * self.theta2.adjoint()) * I
    }
}

/// Spectral norm of `alpha S0 - S0 alpha^H - i (theta1 theta1^H - theta2 theta2^H)`.
pub fn identity_residual(q: &Quadruple) -> f64 {
    norm2(&(&q.alpha * &q.s0 - &q.s0 * q.alpha.adjoint() - q.k_matrix()))
}

/// Natural size of the terms in the identity, used to make residuals relative.
pub fn identity_scale(q: &Quadruple) -> f64 {
    let (t1, t2) = (norm2(&q.theta1), norm2(&q.theta2));
    (2.0 * norm2(&q.alpha) * norm2(&q.s0) + t1 * t1 + t2 * t2).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadrupleClassification {
    pub admissible: bool,
    pub spectral: bool,
    pub controllability_rank: usize,
    pub max_im_sigma_alpha: f64,
    pub identity_residual: f64,
    pub min_eig_s0: f64,
}

pub fn classify(q: &Quadruple, tol: &ToleranceConfig) -> Result<QuadrupleClassification, QuadrupleError> {
    let pd = is_positive_definite(&q.s0, tol);
    let residual = identity_residual(q);
    let admissible = pd.positive && residual <= tol.hermitian_atol * identity_scale(q);
    let rank = controllability_rank(&q.alpha, &q.theta1, tol);
    let max_im = numerics::eigenvalues(&q.alpha)?
        .iter()
        .map(|l| l.im)
        .fold(f64::NEG_INFINITY, f64::max);
    let spectral = admissible && rank == q.n() && max_im <= tol.axis_atol;
    Ok(QuadrupleClassification {
        admissible,
        spectral,
        controllability_rank: rank,
        max_im_sigma_alpha: max_im,
        identity_residual: residual,
        min_eig_s0: pd.min_eigenvalue,
    })
}

/// `alpha = A + i B B^H X`, `S0 = X^{-1}`, `theta1 = B`, `theta2 = -i X^{-1} C^H`.
pub fn from_realization(
    r: &Realization,
    sol: &RiccatiSolution,
    tol: &ToleranceConfig,
) -> Result<Quadruple, QuadrupleError> {
    let check = verify_solution(r, &sol.x).map_err(|e| QuadrupleError::Verification(e.to_string()))?;
    if !check.passes(tol) {
        return Err(QuadrupleError::Verification(format!(
            "residual {:e} (scale {:e}), max Im sigma(alpha) {:e}",
            check.residual_norm, check.residual_scale, check.max_im_alpha
        )));
    }
    if !check.positive() {
        return Err(QuadrupleError::NotPositive { min_eigenvalue: check.min_eig_x });
    }
    let x = hermitian_part(&sol.x);
    let n = r.n();
    let s0 = hermitian_part(&cholesky_solve(&x, &ComplexMatrix::identity(n, n))?);
    let alpha = r.a() + r.b() * r.b().adjoint() * &x * I;
    let theta2 = &s0 * r.c().adjoint() * (-I);
    Quadruple::new(alpha, s0, r.b().clone(), theta2)
}

/// Free parameters of an admissible quadruple: `alpha = (H + K/2) S0^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleParam {
    pub h: ComplexMatrix,
    pub s0: ComplexMatrix,
    pub theta1: ComplexMatrix,
    pub theta2: ComplexMatrix,
}

impl AdmissibleParam {
    pub fn validate(&self, tol: &ToleranceConfig) -> Result<(), QuadrupleError> {
        check_block_dims([("H", &self.h), ("S0", &self.s0)], &self.theta1, &self.theta2)?;
        let deviation = hermitian_deviation(&self.h);
        if deviation > tol.hermitian_atol * norm2(&self.h).max(1.0) {
            return Err(QuadrupleError::NotHermitian { deviation });
        }
        let pd = is_positive_definite(&self.s0, tol);
        if !pd.positive {
            return Err(QuadrupleError::NotPositive { min_eigenvalue: pd.min_eigenvalue });
        }
        Ok(())
    }
}

pub fn from_parametrization(p: &AdmissibleParam, tol: &ToleranceConfig) -> Result<Quadruple, QuadrupleError> {
    p.validate(tol)?;
    let h = hermitian_part(&p.h);
    let s0 = hermitian_part(&p.s0);
    let k = (&p.theta1 * p.theta1.adjoint() - &p.theta2 * p.theta2.adjoint()) * I;
    let half = C64::new(0.5, 0.0);
    // alpha^H = S0^{-1} (H + K/2)^H
    let rhs = (&h + &k * half).adjoint();
    let alpha = cholesky_solve(&s0, &rhs)
        .map_err(|_| QuadrupleError::NotPositive { min_eigenvalue: 0.0 })?
        .adjoint();
    Quadruple::new(alpha, s0, p.theta1.clone(), p.theta2.clone())
}

/// Inverse of [`from_parametrization`]: `H = (alpha S0 + S0 alpha^H) / 2`.
pub fn to_parametrization(q: &Quadruple) -> AdmissibleParam {
    AdmissibleParam {
        h: hermitian_part(&(&q.alpha * &q.s0)),
        s0: q.s0.clone(),
        theta1: q.theta1.clone(),
        theta2: q.theta2.clone(),
    }
}

/// Similarity by `T = S0^{1/2}`: `(T^{-1} alpha T, I, T^{-1} theta1, T^{-1} theta2)`.
pub fn normalize(q: &Quadruple, tol: &ToleranceConfig) -> Result<Quadruple, QuadrupleError> {
    let pd = is_positive_definite(&q.s0, tol);
    if !pd.positive {
        return Err(QuadrupleError::NotPositive { min_eigenvalue: pd.min_eigenvalue });
    }
    let n = q.n();
    let t = hermitian_sqrt(&q.s0)?;
    let t_inv = cholesky_solve(&t, &ComplexMatrix::identity(n, n))?;
    Quadruple::new(
        &t_inv * &q.alpha * &t,
        ComplexMatrix::identity(n, n),
        &t_inv * &q.theta1,
        &t_inv * &q.theta2,
    )
}
