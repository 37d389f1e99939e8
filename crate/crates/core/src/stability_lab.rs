//! Empirical stability of the inverse procedure: random perturbations of a
//! realization within the contractive class, and of a quadruple within the
//! admissible manifold, with the resulting solution/potential deviations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::direct::{weyl_from_quadruple, DirectError};
use crate::io::fmt_f64;
use crate::numerics::{hermitian_part, norm2, ComplexMatrix, NumericsError, ToleranceConfig, C64};
use crate::potential::{Grid, PotentialError, PotentialEvaluator};
use crate::quadruple::{
    classify, from_parametrization, identity_residual, identity_scale, to_parametrization, AdmissibleParam,
    Quadruple, QuadrupleError,
};
use crate::realization::{check_gn, GnCertificate, Realization, RealizationError};
use crate::riccati::{shifted_signature, solve_stabilizing, RiccatiError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("invalid perturbation spec: {0}")]
    Spec(String),
    #[error("input realization is not in the contractive class (sup norm on R = {sup_norm}, minimal = {minimal}, poles in C+ = {poles_up})")]
    NotInGn { sup_norm: f64, minimal: bool, poles_up: bool },
    #[error("input quadruple is not spectral")]
    NotSpectral,
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error(transparent)]
    Realization(#[from] RealizationError),
    #[error(transparent)]
    Quadruple(#[from] QuadrupleError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Direct(#[from] DirectError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationMode {
    Quadruple,
    Realization,
}

impl PerturbationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Quadruple => "quadruple",
            Self::Realization => "realization",
        }
    }
}

impl std::str::FromStr for PerturbationMode {
    type Err = StabilityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "realization" => Ok(Self::Realization),
            "quadruple" => Ok(Self::Quadruple),
            other => Err(StabilityError::Spec(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub mode: PerturbationMode,
    /// Strictly positive and strictly decreasing; a `delta = 0` row is added.
    pub deltas: Vec<f64>,
    pub samples_per_delta: usize,
    pub seed: u64,
    /// Comparison points for the potential deviation; its span is the sup range.
    pub grid: Grid,
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<(), StabilityError> {
        if self.samples_per_delta == 0 {
            return Err(StabilityError::Spec("samples_per_delta must be at least 1".into()));
        }
        if self.deltas.is_empty() {
            return Err(StabilityError::Spec("at least one delta is required".into()));
        }
        if self.deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(StabilityError::Spec("deltas must be finite and strictly positive".into()));
        }
        if self.deltas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(StabilityError::Spec("deltas must be strictly decreasing".into()));
        }
        if self.grid.start < 0.0 {
            return Err(StabilityError::Spec("potential grid must start at x >= 0".into()));
        }
        Ok(())
    }

    pub fn x_sup_range(&self) -> (f64, f64) {
        (self.grid.start, self.grid.stop)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityRow {
    pub delta: f64,
    pub accepted: usize,
    pub rejected: usize,
    /// NaN when no sample was accepted.
    pub max_dev: f64,
    pub mean_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub mode: PerturbationMode,
    /// In spec order, followed by the `delta = 0` row.
    pub rows: Vec<StabilityRow>,
    /// Sup norm on R of the unperturbed Weyl function.
    pub base_sup_norm: f64,
    /// Set when the input is within [`BOUNDARY_MARGIN`] of the contractivity
    /// boundary; monotone behaviour is not expected there.
    pub boundary: bool,
    /// Accepted realization samples whose shifted Hermitian matrix failed the
    /// inertia check.
    pub signature_failures: usize,
    /// Largest relative identity residual over accepted quadruple samples.
    pub max_identity_residual: f64,
}

impl StabilityReport {
    /// `max_dev` non-increasing as `delta` decreases over the positive rows.
    pub fn monotone_in_delta(&self) -> bool {
        let positive: Vec<&StabilityRow> = self.rows.iter().filter(|r| r.delta > 0.0).collect();
        positive.windows(2).all(|w| w[1].max_dev <= w[0].max_dev)
    }

    pub fn row(&self, delta: f64) -> Option<&StabilityRow> {
        self.rows.iter().find(|r| r.delta == delta)
    }
}

pub const BOUNDARY_MARGIN: f64 = 0.05;

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index)
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

/// Scale the blocks to unit summed spectral norm, then by `u * delta` with
/// `u` uniform in `[0, 1)`, so the summed norm is strictly below `delta`.
fn scale_direction(rng: &mut ChaCha8Rng, mut blocks: Vec<ComplexMatrix>, delta: f64) -> Vec<ComplexMatrix> {
    let total: f64 = blocks.iter().map(norm2).sum();
    let u: f64 = rng.random_range(0.0..1.0);
    let factor = if total > 0.0 { u * delta / total } else { 0.0 };
    for b in &mut blocks {
        *b *= C64::new(factor, 0.0);
    }
    blocks
}

struct Outcome {
    deviation: Option<f64>,
    signature_ok: bool,
    identity_residual: f64,
}

fn aggregate(delta: f64, outcomes: &[Outcome]) -> StabilityRow {
    let devs: Vec<f64> = outcomes.iter().filter_map(|o| o.deviation).collect();
    let accepted = devs.len();
    let (max_dev, mean_dev) = if accepted == 0 {
        (f64::NAN, f64::NAN)
    } else {
        (devs.iter().copied().fold(0.0, f64::max), devs.iter().sum::<f64>() / accepted as f64)
    };
    StabilityRow { delta, accepted, rejected: outcomes.len() - accepted, max_dev, mean_dev }
}

fn require_gn(r: &Realization, tol: &ToleranceConfig) -> Result<GnCertificate, StabilityError> {
    let cert = check_gn(r, tol)?;
    if !cert.in_gn {
        return Err(StabilityError::NotInGn {
            sup_norm: cert.sup_norm_on_r,
            minimal: cert.minimal,
            poles_up: cert.poles_in_upper_halfplane,
        });
    }
    Ok(cert)
}

fn run_rows<F>(spec: &PerturbationSpec, sample: F) -> (Vec<StabilityRow>, Vec<Outcome>)
where
    F: Fn(&mut ChaCha8Rng, f64) -> Outcome + Sync,
{
    let mut rows = Vec::with_capacity(spec.deltas.len() + 1);
    let mut all = Vec::new();
    for (row_index, &delta) in spec.deltas.iter().enumerate() {
        let base = (row_index * spec.samples_per_delta) as u64;
        let outcomes: Vec<Outcome> = (0..spec.samples_per_delta as u64)
            .into_par_iter()
            .map(|s| sample(&mut sample_rng(spec.seed, base + s), delta))
            .collect();
        rows.push(aggregate(delta, &outcomes));
        all.extend(outcomes);
    }
    // delta = 0 reproduces the input exactly, so every sample is accepted with
    // zero deviation.
    rows.push(StabilityRow {
        delta: 0.0,
        accepted: spec.samples_per_delta,
        rejected: 0,
        max_dev: 0.0,
        mean_dev: 0.0,
    });
    (rows, all)
}

/// Perturb `(A, B, C)` with summed spectral norm below each delta, keep the
/// samples that stay in the class, and record `|X - X~|`.
pub fn perturb_realization_experiment(
    r: &Realization,
    spec: &PerturbationSpec,
    tol: &ToleranceConfig,
) -> Result<StabilityReport, StabilityError> {
    spec.validate()?;
    if spec.mode != PerturbationMode::Realization {
        return Err(StabilityError::Spec("realization experiment needs mode = realization".into()));
    }
    let cert = require_gn(r, tol)?;
    let x = solve_stabilizing(r, tol)?.x;
    let (n, m1, m2) = (r.n(), r.m1(), r.m2());

    let (rows, outcomes) = run_rows(spec, |rng, delta| {
        let dirs = vec![gaussian(rng, n, n), gaussian(rng, n, m1), gaussian(rng, m2, n)];
        let d = scale_direction(rng, dirs, delta);
        let rejected = Outcome { deviation: None, signature_ok: true, identity_residual: 0.0 };
        let Ok(rt) = Realization::new(r.a() + &d[0], r.b() + &d[1], r.c() + &d[2]) else {
            return rejected;
        };
        match check_gn(&rt, tol) {
            Ok(c) if c.in_gn => {}
            _ => return rejected,
        }
        let Ok(sol) = solve_stabilizing(&rt, tol) else {
            return rejected;
        };
        let shift = 10.0 * (1.0 + norm2(rt.a()));
        Outcome {
            deviation: Some(norm2(&(&x - &sol.x))),
            signature_ok: shifted_signature(&rt, shift).passes(),
            identity_residual: 0.0,
        }
    });
    Ok(StabilityReport {
        mode: PerturbationMode::Realization,
        rows,
        base_sup_norm: cert.sup_norm_on_r,
        boundary: cert.sup_norm_on_r > 1.0 - BOUNDARY_MARGIN,
        signature_failures: outcomes.iter().filter(|o| o.deviation.is_some() && !o.signature_ok).count(),
        max_identity_residual: 0.0,
    })
}

/// Points beyond the grid, spaced geometrically (ratio 1.25), up to this
/// multiple of `stop + 1`.
const EXTENSION_CAP: f64 = 100.0;
const EXTENSION_RATIO: f64 = 1.25;
const TAIL_THRESHOLD: f64 = 1e-10;

/// Sup over the grid of `|v(x) - v~(x)|`, continued past the grid until both
/// potentials fall below `1e-10`.
pub fn potential_sup_deviation(
    base: &PotentialEvaluator,
    base_samples: &[ComplexMatrix],
    other: &PotentialEvaluator,
    grid: &Grid,
) -> Result<f64, PotentialError> {
    let xs = grid.points();
    let mut sup: f64 = 0.0;
    for (x, v) in xs.iter().zip(base_samples) {
        sup = sup.max(norm2(&(v - other.evaluate_v(*x)?)));
    }
    let cap = EXTENSION_CAP * (grid.stop + 1.0);
    let mut x = grid.stop.max(grid.step);
    loop {
        let (v, w) = (base.evaluate_v(x)?, other.evaluate_v(x)?);
        sup = sup.max(norm2(&(&v - &w)));
        if (norm2(&v) < TAIL_THRESHOLD && norm2(&w) < TAIL_THRESHOLD) || x >= cap {
            break;
        }
        x = (x * EXTENSION_RATIO).min(cap);
    }
    Ok(sup)
}

/// Perturb `(H, S0, theta1, theta2)` and map back through the exact
/// parametrization, so accepted samples satisfy the identity by construction.
pub fn perturb_quadruple_experiment(
    q: &Quadruple,
    spec: &PerturbationSpec,
    tol: &ToleranceConfig,
) -> Result<StabilityReport, StabilityError> {
    spec.validate()?;
    if spec.mode != PerturbationMode::Quadruple {
        return Err(StabilityError::Spec("quadruple experiment needs mode = quadruple".into()));
    }
    if !classify(q, tol)?.spectral {
        return Err(StabilityError::NotSpectral);
    }
    let cert = check_gn(&weyl_from_quadruple(q, tol)?, tol)?;
    let base = PotentialEvaluator::new(q.clone(), tol)?;
    let base_samples = base.sample(&spec.grid.points())?;
    let p = to_parametrization(q);
    let (n, m1, m2) = (q.n(), q.m1(), q.m2());

    let (rows, outcomes) = run_rows(spec, |rng, delta| {
        let dirs = vec![
            hermitian_part(&gaussian(rng, n, n)),
            hermitian_part(&gaussian(rng, n, n)),
            gaussian(rng, n, m1),
            gaussian(rng, n, m2),
        ];
        let d = scale_direction(rng, dirs, delta);
        let rejected = Outcome { deviation: None, signature_ok: true, identity_residual: 0.0 };
        let pt = AdmissibleParam {
            h: &p.h + &d[0],
            s0: &p.s0 + &d[1],
            theta1: &p.theta1 + &d[2],
            theta2: &p.theta2 + &d[3],
        };
        let Ok(qt) = from_parametrization(&pt, tol) else {
            return rejected;
        };
        let residual = identity_residual(&qt) / identity_scale(&qt);
        let Ok(ev) = PotentialEvaluator::new(qt, tol) else {
            return rejected;
        };
        match potential_sup_deviation(&base, &base_samples, &ev, &spec.grid) {
            Ok(dev) => Outcome { deviation: Some(dev), signature_ok: true, identity_residual: residual },
            Err(_) => rejected,
        }
    });
    Ok(StabilityReport {
        mode: PerturbationMode::Quadruple,
        rows,
        base_sup_norm: cert.sup_norm_on_r,
        boundary: cert.sup_norm_on_r > 1.0 - BOUNDARY_MARGIN,
        signature_failures: 0,
        max_identity_residual: outcomes.iter().map(|o| o.identity_residual).fold(0.0, f64::max),
    })
}

/// Result of moving a realization along a fixed direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalResult {
    pub x_tilde: ComplexMatrix,
    pub deviation: f64,
    pub sup_norm_on_r: f64,
    /// The unperturbed input is within the boundary margin.
    pub boundary: bool,
}

/// Solve the Riccati equation for `r + eps * (dA, dB, dC)`.
pub fn realization_direction(
    r: &Realization,
    direction: (&ComplexMatrix, &ComplexMatrix, &ComplexMatrix),
    eps: f64,
    tol: &ToleranceConfig,
) -> Result<DirectionalResult, StabilityError> {
    let base_cert = require_gn(r, tol)?;
    let x = solve_stabilizing(r, tol)?.x;
    let e = C64::new(eps, 0.0);
    let rt = Realization::new(r.a() + direction.0 * e, r.b() + direction.1 * e, r.c() + direction.2 * e)?;
    let cert = require_gn(&rt, tol)?;
    let xt = solve_stabilizing(&rt, tol)?.x;
    Ok(DirectionalResult {
        deviation: norm2(&(&x - &xt)),
        x_tilde: xt,
        sup_norm_on_r: cert.sup_norm_on_r,
        boundary: base_cert.sup_norm_on_r > 1.0 - BOUNDARY_MARGIN,
    })
}

/// Sup deviation of the potential for the parameter move `p -> p + eps * dp`.
pub fn quadruple_direction(
    q: &Quadruple,
    direction: &AdmissibleParam,
    eps: f64,
    grid: &Grid,
    tol: &ToleranceConfig,
) -> Result<f64, StabilityError> {
    let p = to_parametrization(q);
    let e = C64::new(eps, 0.0);
    let pt = AdmissibleParam {
        h: &p.h + &direction.h * e,
        s0: &p.s0 + &direction.s0 * e,
        theta1: &p.theta1 + &direction.theta1 * e,
        theta2: &p.theta2 + &direction.theta2 * e,
    };
    let base = PotentialEvaluator::new(q.clone(), tol)?;
    let other = PotentialEvaluator::new(from_parametrization(&pt, tol)?, tol)?;
    let samples = base.sample(&grid.points())?;
    Ok(potential_sup_deviation(&base, &samples, &other, grid)?)
}

/// CSV over all reports, rows sorted by mode then decreasing delta.
pub fn sweep_report(reports: &[StabilityReport]) -> Result<String, StabilityError> {
    if reports.is_empty() {
        return Err(StabilityError::Spec("no reports to summarize".into()));
    }
    let mut rows: Vec<(PerturbationMode, StabilityRow)> =
        reports.iter().flat_map(|r| r.rows.iter().map(move |row| (r.mode, *row))).collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.delta.total_cmp(&a.1.delta)));
    let mut out = String::from("mode,delta,accepted,rejected,max_dev,mean_dev\n");
    for (mode, row) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            mode.as_str(),
            fmt_f64(row.delta),
            row.accepted,
            row.rejected,
            fmt_f64(row.max_dev),
            fmt_f64(row.mean_dev)
        ));
    }
    Ok(out)
}
