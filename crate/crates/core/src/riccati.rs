//! Stabilizing solution of `X B B^H X + i (A^H X - X A) + C^H C = 0`.
//!
//! With `A0 = -iA` and `D0 = B B^H` the equation is the continuous-time form
//! `X D0 X + A0^H X + X A0 + C^H C = 0`, so the graph of the wanted solution is
//! the invariant subspace of `M = [[A0, D0], [-C^H C, -A0^H]]` for the
//! eigenvalues with non-positive real part; `sigma(A + i B B^H X)` is
//! `i * sigma(A0 + D0 X)`.

use serde::Serialize;
use thiserror::Error;

use crate::numerics::{
    self, hermitian_deviation, hermitian_eigenvalues, hermitian_part, norm2, solve_sylvester,
    ComplexMatrix, ComplexSchur, EigenRegion, NumericsError, RegionClass, ToleranceConfig, C64, I,
};
use crate::realization::{minimality_check, Realization};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiccatiError {
    #[error("realization is not minimal (controllable: {controllable}, observable: {observable})")]
    NonMinimal { controllable: bool, observable: bool },
    #[error("cannot select a {wanted}-dimensional stable subspace: {available} eigenvalues in the closed left half-plane")]
    Selection { wanted: usize, available: usize },
    #[error("selected subspace is not a graph (condition number {condition:e})")]
    GraphCondition { condition: f64 },
    #[error("no candidate solution passed verification (best residual {residual:e}, max Im sigma(alpha) {max_im_alpha:e})")]
    Verification { residual: f64, max_im_alpha: f64 },
    #[error("solution must be {expected}x{expected}, got {rows}x{cols}")]
    Dimension { expected: usize, rows: usize, cols: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// A candidate solution together with its certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiccatiSolution {
    #[serde(skip)]
    pub x: ComplexMatrix,
    pub residual_norm: f64,
    /// Normalizer of the residual: `(|A| + |B|^2 + |C|^2) max(1, |X|)^2`.
    pub residual_scale: f64,
    pub hermitian_deviation: f64,
    /// Largest imaginary part over `sigma(A + i B B^H X)`.
    pub max_im_alpha: f64,
    #[serde(rename = "min_eig_X")]
    pub min_eig_x: f64,
}

impl RiccatiSolution {
    pub fn residual_ok(&self, tol: &ToleranceConfig) -> bool {
        self.residual_norm <= tol.riccati_rtol * self.residual_scale
    }

    pub fn hermitian_ok(&self, tol: &ToleranceConfig) -> bool {
        self.hermitian_deviation <= tol.hermitian_atol * norm2(&self.x).max(1.0)
    }

    pub fn spectrum_ok(&self, tol: &ToleranceConfig) -> bool {
        self.max_im_alpha <= tol.axis_atol
    }

    /// The acceptance gate: residual, Hermitian symmetry and spectral condition.
    pub fn passes(&self, tol: &ToleranceConfig) -> bool {
        self.residual_ok(tol) && self.hermitian_ok(tol) && self.spectrum_ok(tol)
    }

    pub fn positive(&self) -> bool {
        self.min_eig_x > 0.0
    }
}

/// `X B B^H X + i (A^H X - X A) + C^H C`.
pub fn riccati_residual(r: &Realization, x: &ComplexMatrix) -> ComplexMatrix {
    let (a, b, c) = (r.a(), r.b(), r.c());
    let d = b * b.adjoint();
    x * &d * x + (a.adjoint() * x - x * a) * I + c.adjoint() * c
}

/// `A + i B B^H X`.
pub fn closed_loop(r: &Realization, x: &ComplexMatrix) -> ComplexMatrix {
    r.a() + r.b() * r.b().adjoint() * x * I
}

/// Recompute every certificate field for a given `X`.
pub fn verify_solution(r: &Realization, x: &ComplexMatrix) -> Result<RiccatiSolution, RiccatiError> {
    let n = r.n();
    if x.shape() != (n, n) {
        return Err(RiccatiError::Dimension { expected: n, rows: x.nrows(), cols: x.ncols() });
    }
    let residual_norm = norm2(&riccati_residual(r, x));
    let (na, nb, nc) = (norm2(r.a()), norm2(r.b()), norm2(r.c()));
    // term-wise: |XA|+|A^H X| + |X B B^H X| + |C^H C|
    let xs = norm2(x);
    let residual_scale = (2.0 * na * xs + nb * nb * xs * xs + nc * nc).max(f64::MIN_POSITIVE);
    let max_im_alpha = numerics::eigenvalues(&closed_loop(r, x))?
        .iter()
        .map(|l| l.im)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_eig_x = hermitian_eigenvalues(&hermitian_part(x))
        .first()
        .copied()
        .unwrap_or(f64::INFINITY);
    Ok(RiccatiSolution {
        x: x.clone(),
        residual_norm,
        residual_scale,
        hermitian_deviation: hermitian_deviation(x),
        max_im_alpha: if n == 0 { f64::NEG_INFINITY } else { max_im_alpha },
        min_eig_x,
    })
}

/// `M = [[A0, D0], [-C^H C, -A0^H]]` with `A0 = -iA`, `D0 = B B^H`.
pub fn hamiltonian(r: &Realization) -> ComplexMatrix {
    let n = r.n();
    let a0 = r.a() * (-I);
    let mut m = ComplexMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&a0);
    m.view_mut((0, n), (n, n)).copy_from(&(r.b() * r.b().adjoint()));
    m.view_mut((n, 0), (n, n)).copy_from(&(-(r.c().adjoint() * r.c())));
    m.view_mut((n, n), (n, n)).copy_from(&(-a0.adjoint()));
    m
}

// Above this, X1 is treated as singular.
const GRAPH_CONDITION_LIMIT: f64 = 1e12;
// Boundary-subset retries are exhaustive up to this order.
const RETRY_MAX_ORDER: usize = 4;

/// Unique Hermitian solution with `sigma(A + i B B^H X)` in the closed lower
/// half-plane.
pub fn solve_stabilizing(r: &Realization, tol: &ToleranceConfig) -> Result<RiccatiSolution, RiccatiError> {
    let (controllable, observable) = minimality_check(r, tol);
    if !(controllable && observable) {
        return Err(RiccatiError::NonMinimal { controllable, observable });
    }
    let n = r.n();
    if n == 0 {
        return verify_solution(r, &ComplexMatrix::zeros(0, 0));
    }

    let m = hamiltonian(r);
    let schur = ComplexSchur::new(&m)?;
    let eigs = schur.eigenvalues();
    let region = EigenRegion::ClosedLeftHalfPlane { atol: tol.axis_atol * norm2(&m).max(1.0) };
    let interior: Vec<usize> =
        (0..2 * n).filter(|&i| region.classify(eigs[i]) == RegionClass::Interior).collect();
    let boundary: Vec<usize> =
        (0..2 * n).filter(|&i| region.classify(eigs[i]) == RegionClass::Boundary).collect();
    if interior.len() > n || interior.len() + boundary.len() < n {
        return Err(RiccatiError::Selection { wanted: n, available: interior.len() + boundary.len() });
    }
    let need = n - interior.len();

    let mut candidates = vec![boundary[..need].to_vec()];
    if n <= RETRY_MAX_ORDER && need > 0 && need < boundary.len() {
        for subset in combinations(&boundary, need).into_iter().skip(1) {
            candidates.push(subset);
        }
    }

    let mut best: Option<RiccatiSolution> = None;
    let mut worst_condition: f64 = 0.0;
    let mut graph_ok = false;
    for subset in candidates {
        let mut picked = interior.clone();
        picked.extend(subset);
        let mut s = schur.clone();
        s.reorder(&picked);
        let basis = s.leading_basis(n);
        let x1 = basis.rows(0, n).into_owned();
        let x2 = basis.rows(n, n).into_owned();
        let condition = numerics::condition_number(&x1);
        if !(condition < GRAPH_CONDITION_LIMIT) {
            worst_condition = worst_condition.max(condition);
            continue;
        }
        graph_ok = true;
        // X = X2 X1^{-1}, i.e. X1^H X^H = X2^H
        let x = numerics::solve(&x1.adjoint(), &x2.adjoint())?.adjoint();
        let x = newton_polish(r, hermitian_part(&x), tol);
        let sol = verify_solution(r, &x)?;
        if sol.passes(tol) {
            return Ok(sol);
        }
        let better = best.as_ref().is_none_or(|b| {
            (sol.residual_norm / sol.residual_scale) < (b.residual_norm / b.residual_scale)
        });
        if better {
            best = Some(sol);
        }
    }
    if !graph_ok {
        return Err(RiccatiError::GraphCondition { condition: worst_condition });
    }
    let best = best.expect("at least one graph candidate");
    Err(RiccatiError::Verification { residual: best.residual_norm, max_im_alpha: best.max_im_alpha })
}

/// One Newton step `Ac^H dX + dX Ac = -R(X)`, `Ac = A0 + D0 X`, kept only when
/// it lowers the residual. Skipped when the Lyapunov operator is singular
/// (closed-loop eigenvalues on the axis).
fn newton_polish(r: &Realization, x: ComplexMatrix, tol: &ToleranceConfig) -> ComplexMatrix {
    let res = riccati_residual(r, &x);
    let res_norm = norm2(&res);
    if res_norm == 0.0 {
        return x;
    }
    let ac = r.a() * (-I) + r.b() * r.b().adjoint() * &x;
    let Ok(dx) = solve_sylvester(&ac.adjoint(), &ac, &(-&res), tol.axis_atol) else {
        return x;
    };
    let candidate = hermitian_part(&(&x + dx));
    if numerics::all_finite(&candidate) && norm2(&riccati_residual(r, &candidate)) < res_norm {
        candidate
    } else {
        x
    }
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if items.len() < k {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        for mut rest in combinations(&items[i + 1..], k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Inertia of `H = [[-C0, A_c^H], [A_c, D0]]` with `A_c = -iA + cI`,
/// `C0 = C^H C`, `D0 = B B^H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignatureCheck {
    pub shift: f64,
    pub positive: usize,
    pub negative: usize,
    pub min_abs_eigenvalue: f64,
    pub invertible: bool,
}

impl SignatureCheck {
    pub fn passes(&self) -> bool {
        self.invertible && self.positive == self.negative
    }
}

pub fn shifted_signature(r: &Realization, shift: f64) -> SignatureCheck {
    let n = r.n();
    let ac = r.a() * (-I) + ComplexMatrix::identity(n, n) * C64::new(shift, 0.0);
    let mut h = ComplexMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&(-(r.c().adjoint() * r.c())));
    h.view_mut((0, n), (n, n)).copy_from(&ac.adjoint());
    h.view_mut((n, 0), (n, n)).copy_from(&ac);
    h.view_mut((n, n), (n, n)).copy_from(&(r.b() * r.b().adjoint()));
    let eigs = hermitian_eigenvalues(&h);
    let scale = norm2(&h).max(1.0);
    let min_abs = eigs.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
    SignatureCheck {
        shift,
        positive: eigs.iter().filter(|&&l| l > 0.0).count(),
        negative: eigs.iter().filter(|&&l| l < 0.0).count(),
        min_abs_eigenvalue: min_abs,
        invertible: min_abs > 1e3 * f64::EPSILON * scale,
    }
}
