//! Forward map from a quadruple to its Weyl function, numerical certification
//! of the Weyl property by integrating the Dirac system, and spectral data of
//! the square case.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::io::{fmt_f64, MatrixJson};
use crate::numerics::{
    self, cholesky_solve, norm2, ComplexMatrix, ComplexSchur, EigenRegion, NumericsError, RegionClass,
    ToleranceConfig, C64, I,
};
use crate::potential::{PotentialError, PotentialEvaluator};
use crate::quadruple::{classify, normalize, Quadruple, QuadrupleError};
use crate::realization::{Realization, RealizationError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DirectError {
    #[error("quadruple is not admissible (identity residual {residual:e})")]
    Inadmissible { residual: f64 },
    #[error("quadruple is not spectral")]
    NotSpectral,
    #[error("spectral data requires m1 = m2, got m1 = {m1}, m2 = {m2}")]
    NotSquare { m1: usize, m2: usize },
    #[error("eigenvalue {eigenvalue} of beta lies in the upper half-plane")]
    Structure { eigenvalue: C64 },
    #[error("Im z = {im} is too close to the real axis (need >= {min})")]
    NearReal { im: f64, min: f64 },
    #[error("integration length too long for Im z: |Im z| x_max = {product} exceeds {limit}")]
    Stiff { product: f64, limit: f64 },
    #[error("invalid integration request: {0}")]
    Request(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Quadruple(#[from] QuadrupleError),
    #[error(transparent)]
    Realization(#[from] RealizationError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// `{theta, theta1, -i theta2^H S0^{-1}}` with `theta = alpha - i theta1 theta1^H S0^{-1}`.
pub fn weyl_from_quadruple(q: &Quadruple, tol: &ToleranceConfig) -> Result<Realization, DirectError> {
    let cl = classify(q, tol)?;
    if !cl.admissible {
        return Err(DirectError::Inadmissible { residual: cl.identity_residual });
    }
    // S0 is Hermitian: M S0^{-1} = (S0^{-1} M^H)^H.
    let t1 = q.theta1();
    let theta = q.alpha() - cholesky_solve(q.s0(), &(t1 * t1.adjoint()))?.adjoint() * I;
    let c = cholesky_solve(q.s0(), q.theta2())?.adjoint() * (-I);
    Ok(Realization::new(theta, t1.clone(), c)?)
}

/// Samples of `Y(x, z)` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalSolution {
    pub xs: Vec<f64>,
    pub ys: Vec<ComplexMatrix>,
    /// Richardson estimate of the relative global error.
    pub error_estimate: f64,
}

// Beyond this, e^{|Im z| x} exceeds the double range of the growing modes.
const STIFF_LIMIT: f64 = 700.0;
const MIN_STEPS: usize = 16;

/// `Y' = i (z j + j V(x)) Y`, `V = [[0, v], [v^H, 0]]`, applied to a block.
fn rhs(z: C64, v: &ComplexMatrix, w: &ComplexMatrix, m1: usize) -> ComplexMatrix {
    let m2 = v.ncols();
    let cols = w.ncols();
    let w1 = w.rows(0, m1);
    let w2 = w.rows(m1, m2);
    let iz = I * z;
    let mut out = ComplexMatrix::zeros(m1 + m2, cols);
    out.rows_mut(0, m1).copy_from(&(w1 * iz + v * w2 * I));
    out.rows_mut(m1, m2).copy_from(&(-(v.adjoint() * w1 * I) - w2 * iz));
    out
}

/// Classical RK4 with `v` tabulated at half steps; returns the nodes.
fn rk4(z: C64, table: &[ComplexMatrix], stride: usize, w0: &ComplexMatrix, h: f64, steps: usize, m1: usize) -> Vec<ComplexMatrix> {
    let hc = C64::new(h, 0.0);
    let half = C64::new(0.5, 0.0);
    let mut out = Vec::with_capacity(steps + 1);
    let mut w = w0.clone();
    out.push(w.clone());
    for k in 0..steps {
        let v0 = &table[2 * k * stride];
        let vm = &table[(2 * k + 1) * stride];
        let v1 = &table[(2 * k + 2) * stride];
        let k1 = rhs(z, v0, &w, m1);
        let k2 = rhs(z, vm, &(&w + &k1 * (hc * half)), m1);
        let k3 = rhs(z, vm, &(&w + &k2 * (hc * half)), m1);
        let k4 = rhs(z, v1, &(&w + &k3 * hc), m1);
        w += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * (hc / 6.0);
        out.push(w.clone());
    }
    out
}

/// Steps needed so that `(h |M|)^4 <= rtol`, rounded up to a multiple of 4.
fn step_count(ev: &PotentialEvaluator, z: C64, x_max: f64, minimum: usize) -> Result<usize, DirectError> {
    let v_bound = [0.0, 0.25, 0.5, 1.0]
        .iter()
        .map(|f| ev.evaluate_v(f * x_max).map(|v| norm2(&v)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let m_norm = z.norm() + v_bound + 1.0;
    let h = ev.tolerances().ode_rtol.powf(0.25) / m_norm;
    let steps = ((x_max / h).ceil() as usize).max(minimum);
    Ok(steps.div_ceil(4) * 4)
}

fn check_range(z: C64, x_max: f64) -> Result<(), DirectError> {
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(DirectError::Request(format!("x_max must be positive, got {x_max}")));
    }
    let product = z.im.abs() * x_max;
    if product > STIFF_LIMIT {
        return Err(DirectError::Stiff { product, limit: STIFF_LIMIT });
    }
    Ok(())
}

struct BlockRun {
    h: f64,
    nodes: Vec<ComplexMatrix>,
    error_estimate: f64,
}

/// Integrate a column block from `w0` over `[0, x_max]` with RK4 at step
/// `x_max / steps` and at half that step; the finer run is returned.
fn integrate_block(
    ev: &PotentialEvaluator,
    z: C64,
    w0: &ComplexMatrix,
    x_max: f64,
    steps: usize,
) -> Result<BlockRun, DirectError> {
    let m1 = ev.quadruple().m1();
    let fine_steps = 2 * steps;
    let h_fine = x_max / fine_steps as f64;
    // v at quarter steps of the coarse run = half steps of the fine run
    let table: Vec<ComplexMatrix> = (0..=2 * fine_steps)
        .into_par_iter()
        .map(|k| ev.evaluate_v((k as f64 * 0.5 * h_fine).min(x_max)))
        .collect::<Result<_, _>>()?;
    let coarse = rk4(z, &table, 2, w0, 2.0 * h_fine, steps, m1);
    let fine = rk4(z, &table, 1, w0, h_fine, fine_steps, m1);
    let mut worst: f64 = 0.0;
    for (k, c) in coarse.iter().enumerate() {
        let f = &fine[2 * k];
        let scale = norm2(f).max(f64::MIN_POSITIVE);
        worst = worst.max(norm2(&(f - c)) / (15.0 * scale));
    }
    Ok(BlockRun { h: h_fine, nodes: fine, error_estimate: worst })
}

/// `Y(x, z)` with `Y(0, z) = I`, sampled at `x_max * k / steps`.
pub fn fundamental_solution(
    ev: &PotentialEvaluator,
    z: C64,
    x_max: f64,
    steps: usize,
) -> Result<FundamentalSolution, DirectError> {
    if steps < MIN_STEPS {
        return Err(DirectError::Request(format!("need at least {MIN_STEPS} steps, got {steps}")));
    }
    check_range(z, x_max)?;
    let m = ev.quadruple().m1() + ev.quadruple().m2();
    // internal refinement: a multiple of the requested sampling
    let internal = step_count(ev, z, x_max, steps)?;
    let sub = internal.div_ceil(steps);
    let run = integrate_block(ev, z, &ComplexMatrix::identity(m, m), x_max, steps * sub)?;
    let stride = 2 * sub;
    let xs = (0..=steps).map(|k| x_max * k as f64 / steps as f64).collect();
    let ys = (0..=steps).map(|k| run.nodes[k * stride].clone()).collect();
    Ok(FundamentalSolution { xs, ys, error_estimate: run.error_estimate })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeylCertificate {
    pub z_re: f64,
    pub z_im: f64,
    pub x_max: f64,
    /// `\int_0^{x_max} |Y(x, z) [I; phi]|_F^2 dx`.
    pub integral_estimate: f64,
    /// Share of the integral contributed by the last quarter of `[0, x_max]`.
    pub tail_fraction: f64,
    /// Fitted exponential rate of the tested block's squared norm.
    pub direction_growth: f64,
    /// Fitted exponential rate of `|Y(x, z) [0; I]|_F^2`.
    pub complement_growth: f64,
    pub error_estimate: f64,
    pub passed: bool,
}

/// Tail share accepted by the certificate.
pub const TAIL_FRACTION_LIMIT: f64 = 1e-6;
/// Smallest `Im z` the certificate accepts.
pub const MIN_IM_Z: f64 = 0.1;

/// Default integration length `12 / Im z`.
pub fn default_x_max(z: C64) -> f64 {
    12.0 / z.im
}

/// Certify that `phi(z)` from the forward map makes `Y [I; phi]` square
/// integrable while the complementary columns grow.
pub fn weyl_certificate(q: &Quadruple, z: C64, x_max: Option<f64>, tol: &ToleranceConfig) -> Result<WeylCertificate, DirectError> {
    if !(z.im >= MIN_IM_Z) {
        return Err(DirectError::NearReal { im: z.im, min: MIN_IM_Z });
    }
    let phi = weyl_from_quadruple(q, tol)?.evaluate(z, tol)?;
    let m1 = q.m1();
    let mut w0 = ComplexMatrix::zeros(m1 + q.m2(), m1);
    w0.view_mut((0, 0), (m1, m1)).copy_from(&ComplexMatrix::identity(m1, m1));
    w0.view_mut((m1, 0), (q.m2(), m1)).copy_from(&phi);
    let ev = PotentialEvaluator::new(q.clone(), tol)?;
    certify_columns(&ev, z, &w0, x_max.unwrap_or_else(|| default_x_max(z)))
}

/// Certificate for an arbitrary initial block `w0` (`m x k`).
pub fn certify_columns(ev: &PotentialEvaluator, z: C64, w0: &ComplexMatrix, x_max: f64) -> Result<WeylCertificate, DirectError> {
    check_range(z, x_max)?;
    let (m1, m2) = (ev.quadruple().m1(), ev.quadruple().m2());
    if w0.nrows() != m1 + m2 {
        return Err(DirectError::Request(format!("initial block must have {} rows", m1 + m2)));
    }
    let steps = step_count(ev, z, x_max, 64)?;
    // both blocks share one run: the columns of a linear system evolve independently
    let k = w0.ncols();
    let mut both = ComplexMatrix::zeros(m1 + m2, k + m2);
    both.view_mut((0, 0), (m1 + m2, k)).copy_from(w0);
    both.view_mut((m1, k), (m2, m2)).copy_from(&ComplexMatrix::identity(m2, m2));
    let run = integrate_block(ev, z, &both, x_max, steps)?;
    let sq_norms = |cols: std::ops::Range<usize>| -> Vec<f64> {
        run.nodes
            .iter()
            .map(|w| w.columns(cols.start, cols.len()).iter().map(|e| e.norm_sqr()).sum())
            .collect()
    };
    let sq = sq_norms(0..k);
    let comp_sq = sq_norms(k..k + m2);
    let total = simpson(&sq, run.h);
    let tail_start = sq.len() - 1 - (sq.len() - 1) / 4;
    let tail = simpson(&sq[tail_start..], run.h);

    let complement_growth = fitted_rate(&comp_sq, run.h);
    let direction_growth = fitted_rate(&sq, run.h);
    let tail_fraction = if total > 0.0 { tail / total } else { 0.0 };
    let passed = total.is_finite() && tail_fraction <= TAIL_FRACTION_LIMIT && complement_growth > 0.0;
    Ok(WeylCertificate {
        z_re: z.re,
        z_im: z.im,
        x_max,
        integral_estimate: total,
        tail_fraction,
        direction_growth,
        complement_growth,
        error_estimate: run.error_estimate,
        passed,
    })
}

/// Composite Simpson on an even number of uniform intervals (trapezoid on the
/// last interval otherwise).
fn simpson(f: &[f64], h: f64) -> f64 {
    let intervals = f.len().saturating_sub(1);
    if intervals == 0 {
        return 0.0;
    }
    let even = intervals - intervals % 2;
    let mut s = 0.0;
    for k in (0..even).step_by(2) {
        s += f[k] + 4.0 * f[k + 1] + f[k + 2];
    }
    let mut total = s * h / 3.0;
    if even < intervals {
        total += 0.5 * h * (f[intervals - 1] + f[intervals]);
    }
    total
}

/// Least-squares slope of `ln f` against `x` over the second half of the nodes.
fn fitted_rate(f: &[f64], h: f64) -> f64 {
    let start = f.len() / 2;
    let pts: Vec<(f64, f64)> = f[start..]
        .iter()
        .enumerate()
        .filter(|(_, &y)| y > 0.0 && y.is_finite())
        .map(|(k, &y)| ((start + k) as f64 * h, y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Bound states and continuous-spectrum data for `m1 = m2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    /// `(t_k, n_k)` in increasing order of `t_k`.
    pub bound_states: Vec<(f64, usize)>,
    /// Largest `|Im|` over the eigenvalues merged into bound states.
    pub max_bound_state_imag: f64,
    pub beta_tilde: ComplexMatrix,
    pub th1_tilde: ComplexMatrix,
    pub th2_tilde: ComplexMatrix,
    pub omega: ComplexMatrix,
}

#[derive(Serialize)]
struct SpectralDataJson {
    bound_states: Vec<(f64, usize)>,
    max_bound_state_imag: f64,
    beta_tilde: MatrixJson,
    th1_tilde: MatrixJson,
    th2_tilde: MatrixJson,
    omega: MatrixJson,
}

impl SpectralData {
    /// `g(t)^H g(t)`, `g(t) = I - i (th1 + th2)^H (t I - beta)^{-1} th1`.
    pub fn density(&self, t: f64) -> Result<ComplexMatrix, NumericsError> {
        let p = self.th1_tilde.ncols();
        let k = self.beta_tilde.nrows();
        let mut g = ComplexMatrix::identity(p, p);
        if k > 0 {
            let resolvent = ComplexMatrix::identity(k, k) * C64::new(t, 0.0) - &self.beta_tilde;
            let sum = &self.th1_tilde + &self.th2_tilde;
            g -= sum.adjoint() * numerics::solve(&resolvent, &self.th1_tilde)? * I;
        }
        Ok(g.adjoint() * g)
    }

    pub fn to_json(&self) -> String {
        let j = SpectralDataJson {
            bound_states: self.bound_states.clone(),
            max_bound_state_imag: self.max_bound_state_imag,
            beta_tilde: MatrixJson::from_matrix(&self.beta_tilde),
            th1_tilde: MatrixJson::from_matrix(&self.th1_tilde),
            th2_tilde: MatrixJson::from_matrix(&self.th2_tilde),
            omega: MatrixJson::from_matrix(&self.omega),
        };
        serde_json::to_string_pretty(&j).expect("plain data serializes")
    }

    /// `t`, then `re_rho_j_k`, `im_rho_j_k` in row-major entry order.
    pub fn density_csv(&self, ts: &[f64]) -> Result<String, NumericsError> {
        let p = self.th1_tilde.ncols();
        let mut out = String::from("t");
        for j in 1..=p {
            for k in 1..=p {
                out.push_str(&format!(",re_rho_{j}_{k},im_rho_{j}_{k}"));
            }
        }
        out.push('\n');
        for &t in ts {
            let rho = self.density(t)?;
            out.push_str(&fmt_f64(t));
            for j in 0..p {
                for k in 0..p {
                    out.push(',');
                    out.push_str(&fmt_f64(rho[(j, k)].re));
                    out.push(',');
                    out.push_str(&fmt_f64(rho[(j, k)].im));
                }
            }
            out.push('\n');
        }
        Ok(out)
    }
}

pub fn spectral_data_square(q: &Quadruple, tol: &ToleranceConfig) -> Result<SpectralData, DirectError> {
    if q.m1() != q.m2() {
        return Err(DirectError::NotSquare { m1: q.m1(), m2: q.m2() });
    }
    if !classify(q, tol)?.spectral {
        return Err(DirectError::NotSpectral);
    }
    let qn = normalize(q, tol)?;
    let (t1, t2) = (qn.theta1(), qn.theta2());
    let beta = qn.alpha() - t1 * (t1 + t2).adjoint() * I;
    let n = qn.n();
    let mut schur = ComplexSchur::new(&beta)?;
    let eigs = schur.eigenvalues();
    let region = EigenRegion::ClosedLowerHalfPlane { atol: tol.axis_atol * norm2(&beta).max(1.0) };
    let mut interior = Vec::new();
    let mut real = Vec::new();
    for (i, &l) in eigs.iter().enumerate() {
        match region.classify(l) {
            RegionClass::Interior => interior.push(i),
            RegionClass::Boundary => real.push(i),
            RegionClass::Exterior => return Err(DirectError::Structure { eigenvalue: l }),
        }
    }
    let k = interior.len();
    let mut order = interior.clone();
    order.extend(&real);
    schur.reorder(&order);
    let u1 = schur.q.columns(0, k).into_owned();
    let u2 = schur.q.columns(k, n - k).into_owned();
    let beta_tilde = schur.t.view((0, 0), (k, k)).into_owned();

    let mut reals: Vec<C64> = real.iter().map(|&i| eigs[i]).collect();
    reals.sort_by(|a, b| a.re.total_cmp(&b.re));
    let max_bound_state_imag = reals.iter().map(|l| l.im.abs()).fold(0.0, f64::max);
    let mut bound_states: Vec<(f64, usize)> = Vec::new();
    let mut cluster: Vec<f64> = Vec::new();
    for l in &reals {
        if let Some(&last) = cluster.last() {
            if l.re - last > 10.0 * tol.axis_atol {
                bound_states.push(close_cluster(&cluster));
                cluster.clear();
            }
        }
        cluster.push(l.re);
    }
    if !cluster.is_empty() {
        bound_states.push(close_cluster(&cluster));
    }

    Ok(SpectralData {
        bound_states,
        max_bound_state_imag,
        beta_tilde,
        th1_tilde: u1.adjoint() * t1,
        th2_tilde: u1.adjoint() * t2,
        omega: u2.adjoint() * t1,
    })
}

fn close_cluster(c: &[f64]) -> (f64, usize) {
    (c.iter().sum::<f64>() / c.len() as f64, c.len())
}
