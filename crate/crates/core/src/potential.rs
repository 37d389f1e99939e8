//! Closed-form pseudo-exponential potentials
//! `v(x) = -2i theta1^H Q(x)^{-1} e^{2ix alpha} theta2` with
//! `Q(x) = S0 + 2 \int_0^x e^{2it alpha} theta2 theta2^H e^{-2it alpha^H} dt`,
//! and the equivalent kernel `S(x) = e^{-ix alpha} Q(x) e^{ix alpha^H}`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::io::fmt_f64;
use crate::numerics::{
    adaptive_simpson, cholesky_solve, hermitian_part, mat_exp, norm2, solve_sylvester, ComplexMatrix, NumericsError,
    ToleranceConfig, C64, I,
};
use crate::quadruple::{classify, Quadruple, QuadrupleClassification, QuadrupleError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("quadruple is not admissible (identity residual {residual:e}, min eig S0 {min_eig_s0:e})")]
    Inadmissible { residual: f64, min_eig_s0: f64 },
    #[error("potential is defined for x >= 0, got {0}")]
    NegativeX(f64),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Quadruple(#[from] QuadrupleError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Sample points `a, a + h, ...` strictly below `b + h/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self, PotentialError> {
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
            return Err(PotentialError::Grid("bounds and step must be finite".into()));
        }
        if step <= 0.0 {
            return Err(PotentialError::Grid(format!("step must be positive, got {step}")));
        }
        if stop < start {
            return Err(PotentialError::Grid(format!("stop {stop} precedes start {start}")));
        }
        if (stop - start) / step > 1e8 {
            return Err(PotentialError::Grid("more than 1e8 points requested".into()));
        }
        Ok(Self { start, stop, step })
    }

    pub fn len(&self) -> usize {
        let guard = self.stop + 0.5 * self.step;
        let mut k = ((guard - self.start) / self.step).floor() as usize;
        while k > 0 && self.start + k as f64 * self.step >= guard {
            k -= 1;
        }
        while self.start + (k + 1) as f64 * self.step < guard {
            k += 1;
        }
        k + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.start + k as f64 * self.step).collect()
    }
}

impl std::str::FromStr for Grid {
    type Err = PotentialError;

    /// `"start:stop:step"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(PotentialError::Grid(format!("expected start:stop:step, got {s:?}")));
        }
        let parse = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| PotentialError::Grid(format!("not a number: {p:?}")))
        };
        Grid::new(parse(parts[0])?, parse(parts[1])?, parse(parts[2])?)
    }
}

/// Immutable evaluator; the block generator of the `Q` integral is built once.
#[derive(Debug, Clone)]
pub struct PotentialEvaluator {
    quadruple: Quadruple,
    classification: QuadrupleClassification,
    tol: ToleranceConfig,
    // [[2i alpha, theta2 theta2^H], [0, 2i alpha^H]]
    generator: ComplexMatrix,
    // 2 \int_0^\infty e^{-2it alpha} theta2 theta2^H e^{2it alpha^H} dt, when
    // sigma(alpha) is strictly below the axis
    gramian: Option<ComplexMatrix>,
}

/// Spectral gap (relative to `|alpha|`) below which `v` is evaluated through
/// `Q(x)` directly instead of the bounded reformulation.
const BOUNDED_PATH_GAP: f64 = 1e-3;

impl PotentialEvaluator {
    pub fn new(q: Quadruple, tol: &ToleranceConfig) -> Result<Self, PotentialError> {
        let classification = classify(&q, tol)?;
        if !classification.admissible {
            return Err(PotentialError::Inadmissible {
                residual: classification.identity_residual,
                min_eig_s0: classification.min_eig_s0,
            });
        }
        let n = q.n();
        let two_i = C64::new(0.0, 2.0);
        let mut generator = ComplexMatrix::zeros(2 * n, 2 * n);
        generator.view_mut((0, 0), (n, n)).copy_from(&(q.alpha() * two_i));
        generator.view_mut((0, n), (n, n)).copy_from(&(q.theta2() * q.theta2().adjoint()));
        generator.view_mut((n, n), (n, n)).copy_from(&(q.alpha().adjoint() * two_i));
        let gramian = if classification.max_im_sigma_alpha < -BOUNDED_PATH_GAP * norm2(q.alpha()).max(1.0) {
            let g = q.theta2() * q.theta2().adjoint() * C64::new(-2.0, 0.0);
            solve_sylvester(&(q.alpha() * -two_i), &(q.alpha().adjoint() * two_i), &g, 1e-12)
                .ok()
                .map(|p| hermitian_part(&p))
        } else {
            None
        };
        Ok(Self { quadruple: q, classification, tol: *tol, generator, gramian })
    }

    pub fn quadruple(&self) -> &Quadruple {
        &self.quadruple
    }

    pub fn classification(&self) -> &QuadrupleClassification {
        &self.classification
    }

    pub fn tolerances(&self) -> &ToleranceConfig {
        &self.tol
    }

    fn check_x(x: f64) -> Result<(), PotentialError> {
        if x >= 0.0 && x.is_finite() {
            Ok(())
        } else {
            Err(PotentialError::NegativeX(x))
        }
    }

    /// `(Q(x), e^{2ix alpha})`.
    ///
    /// With `F = 2i alpha`, `H = 2i alpha^H` the off-diagonal block of
    /// `exp(x [[F, G], [0, H]])` is `V = (\int_0^x e^{Ft} G e^{-2it alpha^H} dt) e^{Hx}`,
    /// and `e^{-Hx} = (e^{Fx})^H`, so one exponential yields both factors.
    pub fn q_and_exp(&self, x: f64) -> Result<(ComplexMatrix, ComplexMatrix), PotentialError> {
        Self::check_x(x)?;
        let n = self.quadruple.n();
        if x == 0.0 {
            return Ok((self.quadruple.s0().clone(), ComplexMatrix::identity(n, n)));
        }
        let big = mat_exp(&(&self.generator * C64::new(x, 0.0)))?;
        let e = big.view((0, 0), (n, n)).into_owned();
        let v = big.view((0, n), (n, n)).into_owned();
        let q = self.quadruple.s0() + v * e.adjoint() * C64::new(2.0, 0.0);
        Ok((hermitian_part(&q), e))
    }

    pub fn q_of_x(&self, x: f64) -> Result<ComplexMatrix, PotentialError> {
        Ok(self.q_and_exp(x)?.0)
    }

    /// `e^{-ix alpha} Q(x) e^{ix alpha^H}`.
    pub fn s_of_x(&self, x: f64) -> Result<ComplexMatrix, PotentialError> {
        let q = self.q_of_x(x)?;
        let e = mat_exp(&(self.quadruple.alpha() * C64::new(0.0, -x)))?;
        Ok(hermitian_part(&(&e * q * e.adjoint())))
    }

    /// `Lambda(x) = [e^{-ix alpha} theta1, e^{ix alpha} theta2]`.
    pub fn lambda(&self, x: f64) -> Result<ComplexMatrix, PotentialError> {
        let q = &self.quadruple;
        let (n, m1, m2) = (q.n(), q.m1(), q.m2());
        let em = mat_exp(&(q.alpha() * C64::new(0.0, -x)))?;
        let ep = mat_exp(&(q.alpha() * C64::new(0.0, x)))?;
        let mut l = ComplexMatrix::zeros(n, m1 + m2);
        l.view_mut((0, 0), (n, m1)).copy_from(&(em * q.theta1()));
        l.view_mut((0, m1), (n, m2)).copy_from(&(ep * q.theta2()));
        Ok(l)
    }

    /// Independent path: `S(x) = S0 + \int_0^x Lambda Lambda^H dt` by adaptive
    /// Simpson quadrature.
    pub fn s_quadrature(&self, x: f64) -> Result<ComplexMatrix, PotentialError> {
        Self::check_x(x)?;
        let integral = adaptive_simpson(
            |t| {
                let l = self.lambda(t).map_err(|e| match e {
                    PotentialError::Numerics(n) => n,
                    other => NumericsError::OutOfRange(other.to_string()),
                })?;
                Ok(&l * l.adjoint())
            },
            0.0,
            x,
            self.tol.ode_rtol * 1e-2,
        )?;
        Ok(hermitian_part(&(self.quadruple.s0() + integral)))
    }

    /// `v(x)`. With `sigma(alpha)` strictly in the lower half-plane `Q(x)`
    /// mixes exponential rates, so the bounded form
    /// `R = e^{-2ix alpha} Q e^{2ix alpha^H} = P + D (S0 - P) D^H`, `D = e^{-2ix alpha}`,
    /// `v = -2i (D theta1)^H R^{-1} theta2` is used instead.
    pub fn evaluate_v(&self, x: f64) -> Result<ComplexMatrix, PotentialError> {
        if let Some(p) = &self.gramian {
            Self::check_x(x)?;
            let q = &self.quadruple;
            let d = mat_exp(&(q.alpha() * C64::new(0.0, -2.0 * x)))?;
            let r = p + &d * (q.s0() - p) * d.adjoint();
            let y = cholesky_solve(&r, q.theta2())?;
            return Ok((&d * q.theta1()).adjoint() * y * C64::new(0.0, -2.0));
        }
        let (q, e) = self.q_and_exp(x)?;
        let rhs = e * self.quadruple.theta2();
        let y = cholesky_solve(&q, &rhs)?;
        Ok(self.quadruple.theta1().adjoint() * y * C64::new(0.0, -2.0))
    }

    /// `v(x) = -2i Lambda_1^H S(x)^{-1} Lambda_2`, the validation path.
    pub fn evaluate_v_via_s(&self, x: f64) -> Result<ComplexMatrix, PotentialError> {
        let s = self.s_of_x(x)?;
        let l = self.lambda(x)?;
        let m1 = self.quadruple.m1();
        let l1 = l.columns(0, m1).into_owned();
        let l2 = l.columns(m1, self.quadruple.m2()).into_owned();
        Ok(l1.adjoint() * cholesky_solve(&s, &l2)? * C64::new(0.0, -2.0))
    }

    /// Samples of `v` on the given points; evaluated in parallel, order kept.
    pub fn sample(&self, xs: &[f64]) -> Result<Vec<ComplexMatrix>, PotentialError> {
        xs.par_iter().map(|&x| self.evaluate_v(x)).collect()
    }

    /// `|alpha S - S alpha^H - i Lambda j Lambda^H|` relative to its terms.
    pub fn s_node_residual(&self, x: f64) -> Result<f64, PotentialError> {
        let q = &self.quadruple;
        let s = self.s_of_x(x)?;
        let l = self.lambda(x)?;
        let m1 = q.m1();
        let mut lj = l.clone();
        for mut col in lj.columns_mut(m1, q.m2()).column_iter_mut() {
            col.neg_mut();
        }
        let lhs = q.alpha() * &s - &s * q.alpha().adjoint();
        let rhs = lj * l.adjoint() * I;
        let scale = (2.0 * norm2(q.alpha()) * norm2(&s)).max(norm2(&rhs)).max(1.0);
        Ok(norm2(&(lhs - rhs)) / scale)
    }

    /// Relative residual of
    /// `Q^{-1} alpha - alpha^H Q^{-1} - i Q^{-1} theta1 theta1^H Q^{-1} + i Q^{-1} E theta2 theta2^H E^H Q^{-1}`
    /// with `E = e^{2ix alpha}`.
    pub fn transformed_identity_residual(&self, x: f64) -> Result<f64, PotentialError> {
        let quad = &self.quadruple;
        let n = quad.n();
        let (q, e) = self.q_and_exp(x)?;
        let qi = hermitian_part(&cholesky_solve(&q, &ComplexMatrix::identity(n, n))?);
        let a = quad.alpha();
        let u = &qi * quad.theta1();
        let w = &qi * &e * quad.theta2();
        let t1 = &qi * a - a.adjoint() * &qi;
        let t2 = &u * u.adjoint() * I;
        let t3 = &w * w.adjoint() * I;
        let scale = norm2(&t1).max(norm2(&t2)).max(norm2(&t3)).max(f64::MIN_POSITIVE);
        Ok(norm2(&(t1 - t2 + t3)) / scale)
    }

    /// `\int_0^X Q^{-1} e^{2it alpha} theta2 theta2^H e^{-2it alpha^H} Q^{-1} dt`
    /// by adaptive quadrature.
    pub fn tail_integral(&self, x_max: f64) -> Result<ComplexMatrix, PotentialError> {
        Self::check_x(x_max)?;
        let integral = adaptive_simpson(
            |t| {
                let (q, e) = self.q_and_exp(t).map_err(|e| match e {
                    PotentialError::Numerics(n) => n,
                    other => NumericsError::OutOfRange(other.to_string()),
                })?;
                let w = cholesky_solve(&q, &(e * self.quadruple.theta2()))?;
                Ok(&w * w.adjoint())
            },
            0.0,
            x_max,
            self.tol.ode_rtol * 1e-2,
        )?;
        Ok(hermitian_part(&integral))
    }

    pub fn decay_report(&self, xs: &[f64]) -> Result<DecayReport, PotentialError> {
        if xs.is_empty() {
            return Err(PotentialError::Grid("decay report needs at least one point".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PotentialError::Grid("decay report needs increasing points".into()));
        }
        let n = self.quadruple.n();
        let rows: Vec<(f64, f64, f64)> = xs
            .par_iter()
            .map(|&x| -> Result<(f64, f64, f64), PotentialError> {
                let (q, e) = self.q_and_exp(x)?;
                let qi = cholesky_solve(&q, &ComplexMatrix::identity(n, n))?;
                let tail = cholesky_solve(&q, &(&e * self.quadruple.theta2()))?;
                let v = self.quadruple.theta1().adjoint() * &tail * C64::new(0.0, -2.0);
                Ok((norm2(&qi), norm2(&tail), norm2(&v)))
            })
            .collect::<Result<_, _>>()?;
        let inv_q_norms: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let tail_norms: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let last = xs.len() - xs.len().div_ceil(10);
        let v_sup_tail = rows[last..].iter().map(|r| r.2).fold(0.0, f64::max);
        let monotone = inv_q_norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        let kappa_estimate = *inv_q_norms.last().expect("non-empty");
        Ok(DecayReport {
            xs: xs.to_vec(),
            inv_q_norms,
            tail_norms,
            v_sup_tail,
            kappa_estimate,
            monotone,
            spectral: self.classification.spectral,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub xs: Vec<f64>,
    pub inv_q_norms: Vec<f64>,
    pub tail_norms: Vec<f64>,
    /// Largest `|v|` over the last tenth of the sample points.
    pub v_sup_tail: f64,
    /// `|Q(x_max)^{-1}|`.
    pub kappa_estimate: f64,
    pub monotone: bool,
    /// False flags an input that is only admissible; its limits need not vanish.
    pub spectral: bool,
}

/// Potential CSV: `x`, then `re_v_j_k`, `im_v_j_k` in row-major entry order.
pub fn potential_csv(xs: &[f64], vs: &[ComplexMatrix], m1: usize, m2: usize) -> String {
    let mut out = String::from("x");
    for j in 1..=m1 {
        for k in 1..=m2 {
            out.push_str(&format!(",re_v_{j}_{k},im_v_{j}_{k}"));
        }
    }
    out.push('\n');
    for (x, v) in xs.iter().zip(vs) {
        out.push_str(&fmt_f64(*x));
        for j in 0..m1 {
            for k in 0..m2 {
                let z = v[(j, k)];
                out.push(',');
                out.push_str(&fmt_f64(z.re));
                out.push(',');
                out.push_str(&fmt_f64(z.im));
            }
        }
        out.push('\n');
    }
    out
}

/// Largest `|v1(x) - v2(x)|` over the points.
pub fn sup_difference(a: &PotentialEvaluator, b: &PotentialEvaluator, xs: &[f64]) -> Result<f64, PotentialError> {
    let diffs: Vec<f64> = xs
        .par_iter()
        .map(|&x| Ok(norm2(&(a.evaluate_v(x)? - b.evaluate_v(x)?))))
        .collect::<Result<_, PotentialError>>()?;
    Ok(diffs.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::scalar;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn eval(alpha: C64, s0: f64, t1: f64, t2: f64) -> PotentialEvaluator {
        let q = Quadruple::new(scalar(alpha), scalar(c(s0, 0.0)), scalar(c(t1, 0.0)), scalar(c(t2, 0.0))).unwrap();
        PotentialEvaluator::new(q, &ToleranceConfig::default()).unwrap()
    }

    fn w1() -> PotentialEvaluator {
        eval(c(0.0, 0.0), 1.0, 1.0, 1.0)
    }
    fn e2() -> PotentialEvaluator {
        eval(c(0.0, -1.0), 1.0, 1.0, 3f64.sqrt())
    }
    fn w2() -> PotentialEvaluator {
        eval(c(1.0, 0.0), 1.0, 1.0, -1.0)
    }

    #[test]
    fn grid_convention() {
        let g: Grid = "0:10:0.01".parse().unwrap();
        assert_eq!(g.len(), 1001);
        assert_eq!(*g.points().last().unwrap(), 10.0);
        assert_eq!("0:2:1".parse::<Grid>().unwrap().points(), vec![0.0, 1.0, 2.0]);
        assert_eq!("0:2.4:1".parse::<Grid>().unwrap().len(), 3);
        assert_eq!("0:2.6:1".parse::<Grid>().unwrap().len(), 4);
        assert_eq!("1:1:0.5".parse::<Grid>().unwrap().points(), vec![1.0]);
        assert!("0:1".parse::<Grid>().is_err());
        assert!("0:1:0".parse::<Grid>().is_err());
        assert!("2:1:0.1".parse::<Grid>().is_err());
    }

    #[test]
    fn q_examples() {
        assert!((w1().q_of_x(1.0).unwrap()[(0, 0)] - c(3.0, 0.0)).norm() < 1e-14);
        let expected = 1.0 + 1.5 * (4f64.exp() - 1.0);
        assert!((e2().q_of_x(1.0).unwrap()[(0, 0)].re / expected - 1.0).abs() < 1e-14);
        assert_eq!(e2().q_of_x(0.0).unwrap(), scalar(c(1.0, 0.0)));
        assert!(matches!(e2().q_of_x(-1.0), Err(PotentialError::NegativeX(_))));
    }

    #[test]
    fn s_examples() {
        assert!((w1().s_of_x(1.0).unwrap()[(0, 0)] - c(3.0, 0.0)).norm() < 1e-14);
        let expected = (3.0 * 2f64.exp() - (-2f64).exp()) / 2.0;
        let s = e2().s_of_x(1.0).unwrap()[(0, 0)].re;
        assert!((s / expected - 1.0).abs() < 1e-14);
        assert!((s - 11.016).abs() < 1e-3);
        let sq = e2().s_quadrature(1.0).unwrap()[(0, 0)].re;
        assert!((sq / expected - 1.0).abs() < 1e-10);
    }

    #[test]
    fn v_examples() {
        let v = w1().evaluate_v(1.0).unwrap()[(0, 0)];
        assert!((v - c(0.0, -2.0 / 3.0)).norm() < 1e-15);
        let e = 1f64.exp();
        let expected = c(0.0, -4.0 * 3f64.sqrt() * e * e / (3.0 * e.powi(4) - 1.0));
        let v = e2().evaluate_v(1.0).unwrap()[(0, 0)];
        assert!((v - expected).norm() < 1e-14);
        assert!((v.im + 0.314463).abs() < 1e-6);
        let v = w2().evaluate_v(1.0).unwrap()[(0, 0)];
        let expected = c(0.0, 2.0) * c(0.0, 2.0).exp() / 3.0;
        assert!((v - expected).norm() < 1e-14);
        let zero = eval(c(0.0, 0.0), 1.0, 0.0, 0.0);
        assert_eq!(zero.evaluate_v(2.5).unwrap(), scalar(c(0.0, 0.0)));
    }

    #[test]
    fn two_v_paths_agree() {
        for ev in [w1(), w2(), e2()] {
            for x in [0.0, 0.3, 1.0, 4.0] {
                let a = ev.evaluate_v(x).unwrap();
                let b = ev.evaluate_v_via_s(x).unwrap();
                assert!(norm2(&(&a - &b)) <= 1e-10 * norm2(&a).max(1e-300), "x = {x}");
            }
        }
    }

    #[test]
    fn identities_hold() {
        for ev in [w1(), w2(), e2()] {
            for x in [0.0, 0.5, 1.0, 5.0] {
                assert!(ev.s_node_residual(x).unwrap() < 1e-10);
                assert!(ev.transformed_identity_residual(x).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn decay_examples() {
        let r = w1().decay_report(&[1.0, 10.0, 50.0]).unwrap();
        assert!((r.kappa_estimate - 1.0 / 101.0).abs() < 1e-12);
        assert!((r.tail_norms[2] - 1.0 / 101.0).abs() < 1e-12);
        assert!(r.monotone && r.spectral);

        let r = e2().decay_report(&[5.0]).unwrap();
        let expected = 1.0 / (1.0 + 1.5 * (20f64.exp() - 1.0));
        assert!((r.kappa_estimate / expected - 1.0).abs() < 1e-10);

        let up = eval(c(0.0, 1.0), 1.0, 3f64.sqrt(), 1.0);
        let r = up.decay_report(&[0.0, 5.0, 50.0]).unwrap();
        assert!(!r.spectral);
        assert!(r.kappa_estimate > 0.5);

        assert!(w1().decay_report(&[]).is_err());
    }

    #[test]
    fn tail_integral_e2() {
        let t = e2().tail_integral(5.0).unwrap()[(0, 0)].re;
        assert!((t - 0.5).abs() < 1e-8, "{t}");
    }

    #[test]
    fn csv_layout() {
        let csv = potential_csv(&[0.0, 1.0], &[scalar(c(0.0, -2.0)), scalar(c(0.0, -2.0 / 3.0))], 1, 1);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "x,re_v_1_1,im_v_1_1");
        assert_eq!(
            lines.next().unwrap(),
            "0.0000000000000000e0,0.0000000000000000e0,-2.0000000000000000e0"
        );
    }

    #[test]
    fn inadmissible_rejected() {
        let q = Quadruple::new(scalar(c(0.0, 0.0)), scalar(c(1.0, 0.0)), scalar(c(1.0, 0.0)), scalar(c(2.0, 0.0))).unwrap();
        assert!(matches!(
            PotentialEvaluator::new(q, &ToleranceConfig::default()),
            Err(PotentialError::Inadmissible { .. })
        ));
    }
}
