//! State-space realizations `phi(z) = C (zI - A)^{-1} B` of strictly proper
//! rational matrix functions, minimality tests and class membership.

use serde::Serialize;
use thiserror::Error;

use crate::numerics::{
    self, krylov_matrix, norm2, numerical_rank, range_basis, ComplexMatrix, ComplexSchur,
    NumericsError, ToleranceConfig, C64,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RealizationError {
    #[error("invalid realization dimensions: {0}")]
    Dimension(String),
    #[error("evaluation point {z} is within tolerance of the pole {eigenvalue}")]
    NearPole { z: C64, eigenvalue: C64 },
    #[error("similarity matrix is singular (condition number {condition:e})")]
    SingularTransform { condition: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Triple `(A, B, C)` with `A` of order `n`, `B` of size `n x m1` and `C` of
/// size `m2 x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    a: ComplexMatrix,
    b: ComplexMatrix,
    c: ComplexMatrix,
}

impl Realization {
    pub fn new(a: ComplexMatrix, b: ComplexMatrix, c: ComplexMatrix) -> Result<Self, RealizationError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(RealizationError::Dimension(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(RealizationError::Dimension(format!(
                "B must be {n}x m1 with m1 >= 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(RealizationError::Dimension(format!(
                "C must be m2 x{n} with m2 >= 1, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        if ![&a, &b, &c].iter().all(|m| numerics::all_finite(m)) {
            return Err(RealizationError::Dimension("non-finite entry".into()));
        }
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> &ComplexMatrix {
        &self.a
    }
    pub fn b(&self) -> &ComplexMatrix {
        &self.b
    }
    pub fn c(&self) -> &ComplexMatrix {
        &self.c
    }
    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m1(&self) -> usize {
        self.b.ncols()
    }
    pub fn m2(&self) -> usize {
        self.c.nrows()
    }

    pub fn into_parts(self) -> (ComplexMatrix, ComplexMatrix, ComplexMatrix) {
        (self.a, self.b, self.c)
    }

    /// `C (zI - A)^{-1} B`.
    pub fn evaluate(&self, z: C64, tol: &ToleranceConfig) -> Result<ComplexMatrix, RealizationError> {
        if self.n() == 0 {
            return Ok(ComplexMatrix::zeros(self.m2(), self.m1()));
        }
        for lambda in numerics::eigenvalues(&self.a)? {
            if (z - lambda).norm() <= tol.axis_atol {
                return Err(RealizationError::NearPole { z, eigenvalue: lambda });
            }
        }
        Ok(self.evaluate_unchecked(z)?)
    }

    pub(crate) fn evaluate_unchecked(&self, z: C64) -> Result<ComplexMatrix, NumericsError> {
        if self.n() == 0 {
            return Ok(ComplexMatrix::zeros(self.m2(), self.m1()));
        }
        let n = self.n();
        let resolvent = ComplexMatrix::identity(n, n) * z - &self.a;
        Ok(&self.c * numerics::solve(&resolvent, &self.b)?)
    }

    /// Deterministic probe points `2(1 + |A|) e^{i pi k / 9}`, `k = 1..8`.
    pub fn probe_points(&self) -> Vec<C64> {
        probe_points(norm2(&self.a))
    }
}

pub(crate) fn probe_points(a_norm: f64) -> Vec<C64> {
    let radius = 2.0 * (1.0 + a_norm);
    (1..=8)
        .map(|k| C64::from_polar(radius, std::f64::consts::PI * k as f64 / 9.0))
        .collect()
}

/// Controllability of `(A, B)` and observability of `(C, A)` by Krylov rank.
pub fn minimality_check(r: &Realization, tol: &ToleranceConfig) -> (bool, bool) {
    let n = r.n();
    if n == 0 {
        return (true, true);
    }
    let controllable = numerical_rank(&krylov_matrix(&r.a, &r.b), tol.rank_rtol) == n;
    let observable =
        numerical_rank(&krylov_matrix(&r.a.adjoint(), &r.c.adjoint()), tol.rank_rtol) == n;
    (controllable, observable)
}

/// Controllability of a pair `(A, B)`: rank of the Krylov block.
pub fn controllability_rank(a: &ComplexMatrix, b: &ComplexMatrix, tol: &ToleranceConfig) -> usize {
    numerical_rank(&krylov_matrix(a, b), tol.rank_rtol)
}

/// Kalman reduction: restrict to the controllable subspace, then project out
/// the unobservable part. The transfer function is unchanged.
pub fn minimal_reduction(r: &Realization, tol: &ToleranceConfig) -> Realization {
    if r.n() == 0 {
        return r.clone();
    }
    let ctrl = range_basis(&krylov_matrix(&r.a, &r.b), tol.rank_rtol);
    let a1 = ctrl.adjoint() * &r.a * &ctrl;
    let b1 = ctrl.adjoint() * &r.b;
    let c1 = &r.c * &ctrl;
    if a1.nrows() == 0 {
        return Realization { a: a1, b: b1, c: c1 };
    }
    let obs = range_basis(&krylov_matrix(&a1.adjoint(), &c1.adjoint()), tol.rank_rtol);
    Realization {
        a: obs.adjoint() * &a1 * &obs,
        b: obs.adjoint() * &b1,
        c: &c1 * &obs,
    }
}

/// `{T^{-1} A T, T^{-1} B, C T}` together with the condition number of `T`.
pub fn similarity_transform(
    r: &Realization,
    t: &ComplexMatrix,
) -> Result<(Realization, f64), RealizationError> {
    let n = r.n();
    if t.shape() != (n, n) {
        return Err(RealizationError::Dimension(format!(
            "similarity must be {n}x{n}, got {:?}",
            t.shape()
        )));
    }
    let condition = numerics::condition_number(t);
    let t_inv = numerics::inverse(t).map_err(|_| RealizationError::SingularTransform { condition })?;
    let out = Realization {
        a: &t_inv * &r.a * t,
        b: &t_inv * &r.b,
        c: &r.c * t,
    };
    Ok((out, condition))
}

/// Largest relative discrepancy between two transfer functions over the probe
/// points of the first realization.
pub fn transfer_discrepancy(r1: &Realization, r2: &Realization) -> Result<f64, NumericsError> {
    let radius_norm = norm2(&r1.a).max(norm2(&r2.a));
    let mut worst: f64 = 0.0;
    for z in probe_points(radius_norm) {
        let v1 = r1.evaluate_unchecked(z)?;
        let v2 = r2.evaluate_unchecked(z)?;
        let scale = norm2(&v1).max(norm2(&v2)).max(f64::MIN_POSITIVE);
        worst = worst.max(norm2(&(v1 - v2)) / scale);
    }
    Ok(worst)
}

/// Certificate of membership in the class of minimal realizations of
/// functions contractive on the real axis and the upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GnCertificate {
    pub controllable: bool,
    pub observable: bool,
    pub minimal: bool,
    /// `sup_{t in R} sigma_max(phi(t))`; infinite when a pole lies on the axis.
    pub sup_norm_on_r: f64,
    pub poles_in_upper_halfplane: bool,
    /// Largest singular value over sampled points in the upper half-plane.
    pub upper_halfplane_sampled_max: f64,
    pub in_gn: bool,
}

/// Slack accepted above 1 in the contractivity test.
pub const CONTRACTIVITY_SLACK: f64 = 1e-12;

pub fn check_gn(r: &Realization, tol: &ToleranceConfig) -> Result<GnCertificate, RealizationError> {
    let (controllable, observable) = minimality_check(r, tol);
    let minimal = controllable && observable;
    let reduced = minimal_reduction(r, tol);
    let poles = numerics::eigenvalues(reduced.a())?;
    let poles_in_upper_halfplane = poles.iter().any(|p| p.im > tol.axis_atol);
    let sup_norm_on_r = sup_norm_on_real_axis(&reduced, tol)?;

    let mut upper_halfplane_sampled_max: f64 = 0.0;
    if !poles_in_upper_halfplane {
        let radius = norm2(reduced.a());
        let mut samples = probe_points(radius);
        for s in [0.25, 1.0, 4.0] {
            for t in [-2.0, -0.5, 0.0, 0.5, 2.0] {
                samples.push(C64::new(t * (1.0 + radius), s * (1.0 + radius)));
            }
        }
        for z in samples {
            let v = reduced.evaluate_unchecked(z)?;
            upper_halfplane_sampled_max = upper_halfplane_sampled_max.max(norm2(&v));
        }
    } else {
        upper_halfplane_sampled_max = f64::INFINITY;
    }

    let in_gn = minimal && sup_norm_on_r <= 1.0 + CONTRACTIVITY_SLACK && !poles_in_upper_halfplane;
    Ok(GnCertificate {
        controllable,
        observable,
        minimal,
        sup_norm_on_r,
        poles_in_upper_halfplane,
        upper_halfplane_sampled_max,
        in_gn,
    })
}

const GRID_POINTS: usize = 2049;
const BISECTION_RTOL: f64 = 1e-14;

fn sigma_max_at(r: &Realization, t: f64) -> Result<f64, NumericsError> {
    Ok(norm2(&r.evaluate_unchecked(C64::new(t, 0.0))?))
}

/// `sup_{t in R} sigma_max(C (tI - A)^{-1} B)`.
///
/// With `A' = iA` the real axis maps onto the imaginary axis and `gamma` is a
/// singular value of `phi(t)` exactly when the Hamiltonian
/// `[[A', BB^H/gamma], [-C^H C/gamma, -A'^H]]` has the eigenvalue `it`. The
/// supremum is bracketed from a dense grid and bisected on that test.
pub fn sup_norm_on_real_axis(r: &Realization, tol: &ToleranceConfig) -> Result<f64, NumericsError> {
    let n = r.n();
    if n == 0 {
        return Ok(0.0);
    }
    let a_norm = norm2(&r.a);
    let poles = numerics::eigenvalues(&r.a)?;
    let min_pole_dist = poles.iter().map(|p| p.im.abs()).fold(f64::INFINITY, f64::min);
    if min_pole_dist <= tol.axis_atol {
        return Ok(f64::INFINITY);
    }

    let radius = 10.0 * (1.0 + a_norm);
    let mut lower: f64 = 0.0;
    for k in 0..GRID_POINTS {
        let t = -radius + 2.0 * radius * k as f64 / (GRID_POINTS - 1) as f64;
        lower = lower.max(sigma_max_at(r, t)?);
    }
    for p in &poles {
        lower = lower.max(sigma_max_at(r, p.re)?);
    }
    if lower == 0.0 {
        return Ok(0.0);
    }

    let a_rot = &r.a * numerics::I;
    let bb = &r.b * r.b.adjoint();
    let cc = r.c.adjoint() * &r.c;
    let has_axis_eigenvalue = |gamma: f64| -> Result<(Vec<f64>, bool), NumericsError> {
        let mut h = ComplexMatrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(&a_rot);
        h.view_mut((0, n), (n, n)).copy_from(&(&bb / C64::new(gamma, 0.0)));
        h.view_mut((n, 0), (n, n)).copy_from(&(-&cc / C64::new(gamma, 0.0)));
        h.view_mut((n, n), (n, n)).copy_from(&(-a_rot.adjoint()));
        let scale = norm2(&h).max(1.0);
        let eigs = ComplexSchur::new(&h)?.eigenvalues();
        let freqs: Vec<f64> = eigs
            .iter()
            .filter(|l| l.re.abs() <= tol.axis_atol * scale)
            .map(|l| l.im)
            .collect();
        let found = !freqs.is_empty();
        Ok((freqs, found))
    };

    // Raise the lower bound with the frequencies the test reports.
    let raise = |lower: &mut f64, freqs: &[f64]| -> Result<(), NumericsError> {
        let mut f = freqs.to_vec();
        f.sort_by(f64::total_cmp);
        for w in f.windows(2) {
            *lower = lower.max(sigma_max_at(r, 0.5 * (w[0] + w[1]))?);
        }
        for &w in &f {
            *lower = lower.max(sigma_max_at(r, w)?);
        }
        Ok(())
    };

    let mut upper = 2.0 * lower;
    let mut doublings = 0;
    loop {
        let (freqs, found) = has_axis_eigenvalue(upper)?;
        if !found {
            break;
        }
        raise(&mut lower, &freqs)?;
        upper = 2.0 * upper.max(lower);
        doublings += 1;
        if doublings > 200 {
            return Ok(f64::INFINITY);
        }
    }

    for _ in 0..200 {
        if upper - lower <= BISECTION_RTOL * upper {
            break;
        }
        let mid = 0.5 * (lower + upper);
        let (freqs, found) = has_axis_eigenvalue(mid)?;
        if found {
            lower = mid;
            raise(&mut lower, &freqs)?;
            if lower >= upper {
                upper = lower * (1.0 + BISECTION_RTOL);
            }
        } else {
            upper = mid;
        }
    }
    Ok(upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{max_abs_diff, scalar};
    use nalgebra::DVector;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn w1() -> Realization {
        Realization::new(scalar(c(0.0, -1.0)), scalar(c(1.0, 0.0)), scalar(c(0.0, -1.0))).unwrap()
    }

    fn e2() -> Realization {
        Realization::new(
            scalar(c(0.0, -2.0)),
            scalar(c(1.0, 0.0)),
            scalar(c(0.0, -(3f64.sqrt()))),
        )
        .unwrap()
    }

    fn non_controllable() -> Realization {
        Realization::new(
            ComplexMatrix::from_diagonal(&DVector::from_vec(vec![c(0.0, -1.0), c(0.0, -3.0)])),
            ComplexMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]),
            ComplexMatrix::from_row_slice(1, 2, &[c(0.0, -1.0), c(5.0, 0.0)]),
        )
        .unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let tol = ToleranceConfig::default();
        let v = w1().evaluate(c(0.0, 1.0), &tol).unwrap();
        assert!((v[(0, 0)] - c(-0.5, 0.0)).norm() < 1e-15);
        let v = e2().evaluate(c(0.0, 0.0), &tol).unwrap();
        assert!((v[(0, 0)] - c(-(3f64.sqrt()) / 2.0, 0.0)).norm() < 1e-15);
        let zero_c = Realization::new(scalar(c(0.0, -1.0)), scalar(c(1.0, 0.0)), scalar(c(0.0, 0.0)))
            .unwrap();
        assert_eq!(zero_c.evaluate(c(3.0, 1.0), &tol).unwrap()[(0, 0)], c(0.0, 0.0));
    }

    #[test]
    fn evaluate_near_pole_errors() {
        let err = w1().evaluate(c(0.0, -1.0), &ToleranceConfig::default()).unwrap_err();
        assert!(matches!(err, RealizationError::NearPole { .. }));
    }

    #[test]
    fn dimension_validation() {
        assert!(Realization::new(ComplexMatrix::zeros(2, 2), ComplexMatrix::zeros(1, 1), ComplexMatrix::zeros(1, 2)).is_err());
        assert!(Realization::new(ComplexMatrix::zeros(1, 1), ComplexMatrix::zeros(1, 0), ComplexMatrix::zeros(1, 1)).is_err());
        let empty = Realization::new(ComplexMatrix::zeros(0, 0), ComplexMatrix::zeros(0, 1), ComplexMatrix::zeros(1, 0)).unwrap();
        assert_eq!(minimality_check(&empty, &ToleranceConfig::default()), (true, true));
    }

    #[test]
    fn minimality_examples() {
        let tol = ToleranceConfig::default();
        assert_eq!(minimality_check(&w1(), &tol), (true, true));
        assert_eq!(minimality_check(&non_controllable(), &tol), (false, true));
    }

    #[test]
    fn reduction_drops_uncontrollable_mode() {
        let tol = ToleranceConfig::default();
        let red = minimal_reduction(&non_controllable(), &tol);
        assert_eq!(red.n(), 1);
        assert!(transfer_discrepancy(&red, &w1()).unwrap() < 1e-12);
        assert!((red.a()[(0, 0)] - c(0.0, -1.0)).norm() < 1e-14);
    }

    #[test]
    fn reduction_drops_duplicate_mode() {
        let tol = ToleranceConfig::default();
        let r = Realization::new(
            ComplexMatrix::from_diagonal(&DVector::from_vec(vec![c(0.0, -1.0), c(0.0, -1.0)])),
            ComplexMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(1.0, 0.0)]),
            ComplexMatrix::from_row_slice(1, 2, &[c(0.0, -0.5), c(0.0, -0.5)]),
        )
        .unwrap();
        let red = minimal_reduction(&r, &tol);
        assert_eq!(red.n(), 1);
        assert!(transfer_discrepancy(&red, &w1()).unwrap() < 1e-12);
        let same = minimal_reduction(&w1(), &tol);
        assert_eq!(same.n(), 1);
        assert!(transfer_discrepancy(&same, &w1()).unwrap() < 1e-15);
    }

    #[test]
    fn gn_examples() {
        let tol = ToleranceConfig::default();
        let cert = check_gn(&w1(), &tol).unwrap();
        assert!(cert.in_gn);
        assert!((cert.sup_norm_on_r - 1.0).abs() <= 1e-12);

        let cert = check_gn(&e2(), &tol).unwrap();
        assert!(cert.in_gn);
        assert!((cert.sup_norm_on_r - 3f64.sqrt() / 2.0).abs() <= 1e-12);

        let scaled = Realization::new(scalar(c(0.0, -1.0)), scalar(c(1.0, 0.0)), scalar(c(0.0, -1.1)))
            .unwrap();
        let cert = check_gn(&scaled, &tol).unwrap();
        assert!(!cert.in_gn);
        assert!((cert.sup_norm_on_r - 1.1).abs() <= 1e-12);
    }

    #[test]
    fn upper_half_plane_pole_detected() {
        let tol = ToleranceConfig::default();
        let r = Realization::new(scalar(c(0.0, 2.0)), scalar(c(1.0, 0.0)), scalar(c(0.5, 0.0))).unwrap();
        let cert = check_gn(&r, &tol).unwrap();
        assert!(cert.poles_in_upper_halfplane);
        assert!(!cert.in_gn);
    }

    #[test]
    fn real_pole_gives_infinite_norm() {
        let tol = ToleranceConfig::default();
        let r = Realization::new(scalar(c(1.0, 0.0)), scalar(c(1.0, 0.0)), scalar(c(1.0, 0.0))).unwrap();
        assert!(sup_norm_on_real_axis(&r, &tol).unwrap().is_infinite());
    }

    #[test]
    fn similarity_examples() {
        let tol = ToleranceConfig::default();
        let (t, cond) = similarity_transform(&w1(), &scalar(c(2.0, 0.0))).unwrap();
        assert_eq!(cond, 1.0);
        assert!(max_abs_diff(t.a(), &scalar(c(0.0, -1.0))) < 1e-15);
        assert!(max_abs_diff(t.b(), &scalar(c(0.5, 0.0))) < 1e-15);
        assert!(max_abs_diff(t.c(), &scalar(c(0.0, -2.0))) < 1e-15);
        let before = w1().evaluate(c(0.0, 1.0), &tol).unwrap();
        let after = t.evaluate(c(0.0, 1.0), &tol).unwrap();
        assert!(max_abs_diff(&before, &after) < 1e-15);

        let (same, _) = similarity_transform(&e2(), &ComplexMatrix::identity(1, 1)).unwrap();
        assert_eq!(same, e2());

        assert!(matches!(
            similarity_transform(&w1(), &scalar(c(0.0, 0.0))),
            Err(RealizationError::SingularTransform { .. })
        ));
    }

    #[test]
    fn sup_norm_two_state_peak_off_origin() {
        // phi(t) = 1/(t - 2 + 0.1i) + 1/(t + 2 + 0.1i): narrow peaks near t = +-2
        let tol = ToleranceConfig::default();
        let r = Realization::new(
            ComplexMatrix::from_diagonal(&DVector::from_vec(vec![c(2.0, -0.1), c(-2.0, -0.1)])),
            ComplexMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(1.0, 0.0)]),
            ComplexMatrix::from_row_slice(1, 2, &[c(0.01, 0.0), c(0.01, 0.0)]),
        )
        .unwrap();
        let sup = sup_norm_on_real_axis(&r, &tol).unwrap();
        // brute-force oracle on a very fine grid around the peaks
        let mut brute: f64 = 0.0;
        for k in 0..=400_000 {
            let t = -3.0 + 6.0 * k as f64 / 400_000.0;
            brute = brute.max(sigma_max_at(&r, t).unwrap());
        }
        assert!(sup >= brute * (1.0 - 1e-12));
        assert!(sup <= brute * (1.0 + 1e-6));
    }
}
