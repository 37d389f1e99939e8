use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use dirac_inverse::direct::{spectral_data_square, weyl_certificate, weyl_from_quadruple, DirectError};
use dirac_inverse::io::{
    quadruple_from_json, quadruple_to_json, realization_from_json, realization_to_json, MatrixJson, SchemaError,
};
use dirac_inverse::numerics::NumericsError;
use dirac_inverse::potential::{potential_csv, sup_difference, Grid, PotentialError, PotentialEvaluator};
use dirac_inverse::quadruple::{classify, from_realization, Quadruple, QuadrupleError};
use dirac_inverse::realization::{check_gn, similarity_transform, GnCertificate, Realization, RealizationError};
use dirac_inverse::riccati::{solve_stabilizing, RiccatiError};
use dirac_inverse::stability_lab::{
    perturb_quadruple_experiment, perturb_realization_experiment, sweep_report, PerturbationMode, PerturbationSpec,
    StabilityError, StabilityReport,
};
use dirac_inverse::{ToleranceConfig, C64};

#[derive(Debug, Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Domain(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<SchemaError> for Failure {
    fn from(e: SchemaError) -> Self {
        Failure::Usage(e.to_string())
    }
}

macro_rules! numerical_failure {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Numerical(e.to_string())
            }
        }
    )*};
}

numerical_failure!(NumericsError, RealizationError, RiccatiError, QuadrupleError);

impl From<PotentialError> for Failure {
    fn from(e: PotentialError) -> Self {
        match e {
            PotentialError::Inadmissible { .. } => Failure::Domain(e.to_string()),
            PotentialError::NegativeX(_) | PotentialError::Grid(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<DirectError> for Failure {
    fn from(e: DirectError) -> Self {
        match e {
            DirectError::Inadmissible { .. } | DirectError::NotSpectral | DirectError::NotSquare { .. } => {
                Failure::Domain(e.to_string())
            }
            DirectError::NearReal { .. } | DirectError::Stiff { .. } | DirectError::Request(_) => {
                Failure::Usage(e.to_string())
            }
            DirectError::Potential(p) => p.into(),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<StabilityError> for Failure {
    fn from(e: StabilityError) -> Self {
        match e {
            StabilityError::Spec(_) => Failure::Usage(e.to_string()),
            StabilityError::NotInGn { .. } | StabilityError::NotSpectral => Failure::Domain(e.to_string()),
            StabilityError::Potential(p) => p.into(),
            StabilityError::Direct(d) => d.into(),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

/// Compact number for messages: fixed notation with trailing zeros removed
/// in the ordinary range, scientific otherwise.
pub fn short(x: f64) -> String {
    if x == 0.0 || (x.abs() >= 1e-3 && x.abs() < 1e6) {
        let s = format!("{x:.6}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{x:.6e}")
    }
}

/// `RE+IMi` or `RE-IMi`, no spaces; exponents allowed in either part.
pub fn parse_complex(s: &str) -> Result<C64, String> {
    let bad = || format!("expected RE+IMi or RE-IMi, got {s:?}");
    let body = s.strip_suffix('i').ok_or_else(bad)?;
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'))
        .ok_or_else(bad)?;
    let re: f64 = body[..split].parse().map_err(|_| bad())?;
    let im: f64 = body[split..].trim_start_matches('+').parse().map_err(|_| bad())?;
    if !(re.is_finite() && im.is_finite()) {
        return Err(bad());
    }
    Ok(C64::new(re, im))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn read_quadruple(path: &Path) -> Result<Quadruple, Failure> {
    quadruple_from_json(&read(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn read_realization(path: &Path) -> Result<Realization, Failure> {
    realization_from_json(&read(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

pub fn load_tolerances(path: Option<&Path>) -> Result<ToleranceConfig, Failure> {
    let Some(path) = path else {
        return Ok(ToleranceConfig::default());
    };
    let tol: ToleranceConfig = serde_json::from_str(&read(path)?)
        .map_err(|e| Failure::Usage(format!("{}: malformed tolerances: {e}", path.display())))?;
    tol.validate().map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(tol)
}

fn gn_reason(cert: &GnCertificate) -> String {
    if !cert.minimal {
        format!(
            "realization is not minimal (controllable: {}, observable: {})",
            cert.controllable, cert.observable
        )
    } else if cert.poles_in_upper_halfplane {
        "A has eigenvalues in the upper half-plane".to_string()
    } else {
        format!("sup norm on R = {} > 1", short(cert.sup_norm_on_r))
    }
}

/// Class check, stabilizing Riccati solution and the quadruple it generates.
fn recover(r: &Realization, tol: &ToleranceConfig, report: bool) -> Result<Quadruple, Failure> {
    let cert = check_gn(r, tol)?;
    if !cert.in_gn {
        return Err(Failure::Domain(format!("not in the contractive class: {}", gn_reason(&cert))));
    }
    let sol = solve_stabilizing(r, tol)?;
    if report {
        println!(
            "Riccati residual {:.3e} (scale {:.3e}), min eig X {:.6e}, max Im sigma(alpha) {:.3e}",
            sol.residual_norm, sol.residual_scale, sol.min_eig_x, sol.max_im_alpha
        );
    }
    Ok(from_realization(r, &sol, tol)?)
}

fn write_potential(ev: &PotentialEvaluator, grid: &Grid, path: &Path) -> Result<usize, Failure> {
    let xs = grid.points();
    let vs = ev.sample(&xs)?;
    let q = ev.quadruple();
    write(path, &potential_csv(&xs, &vs, q.m1(), q.m2()))?;
    Ok(xs.len())
}

pub fn solve_inverse(
    weyl: &Path,
    out: &Path,
    potential: Option<(&Path, &Grid)>,
    riccati_rtol: Option<f64>,
    mut tol: ToleranceConfig,
) -> Result<(), Failure> {
    if let Some(t) = riccati_rtol {
        if !(t.is_finite() && t > 0.0) {
            return Err(Failure::Usage(format!("--tol must be positive, got {t}")));
        }
        tol.riccati_rtol = t;
    }
    let r = read_realization(weyl)?;
    let q = recover(&r, &tol, true)?;
    write(out, &quadruple_to_json(&q))?;
    println!("wrote quadruple (n = {}, m1 = {}, m2 = {}) to {}", q.n(), q.m1(), q.m2(), out.display());
    if let Some((path, grid)) = potential {
        let ev = PotentialEvaluator::new(q, &tol)?;
        let count = write_potential(&ev, grid, path)?;
        println!("wrote {count} potential samples to {}", path.display());
    }
    Ok(())
}

pub fn solve_direct(quadruple: &Path, out: &Path, tol: &ToleranceConfig) -> Result<(), Failure> {
    let q = read_quadruple(quadruple)?;
    let cl = classify(&q, tol)?;
    if !cl.admissible {
        return Err(Failure::Domain(format!(
            "quadruple is not admissible: identity residual = {}, min eig S0 = {}",
            short(cl.identity_residual),
            short(cl.min_eig_s0)
        )));
    }
    let r = weyl_from_quadruple(&q, tol)?;
    write(out, &realization_to_json(&r))?;
    println!(
        "wrote Weyl function realization (n = {}, {} x {}) to {}; spectral: {}",
        r.n(),
        r.m2(),
        r.m1(),
        out.display(),
        cl.spectral
    );
    Ok(())
}

pub fn verify(quadruple: &Path, zs: &[C64], x_max: Option<f64>, tol: &ToleranceConfig) -> Result<(), Failure> {
    let q = read_quadruple(quadruple)?;
    let mut failed = Vec::new();
    for &z in zs {
        let cert = weyl_certificate(&q, z, x_max, tol)?;
        println!(
            "z = {}{:+}i: {} (integral {:.9e}, tail fraction {:.3e}, complement growth {:.4}, x_max {})",
            z.re,
            z.im,
            if cert.passed { "passed" } else { "FAILED" },
            cert.integral_estimate,
            cert.tail_fraction,
            cert.complement_growth,
            short(cert.x_max)
        );
        if !cert.passed {
            failed.push(format!("{}{:+}i", z.re, z.im));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("Weyl certificate failed at z = {}", failed.join(", "))))
    }
}

pub fn round_trip(
    quadruple: &Path,
    grid: &Grid,
    max_diff: f64,
    similarity: Option<&Path>,
    tol: &ToleranceConfig,
) -> Result<(), Failure> {
    if !(max_diff.is_finite() && max_diff > 0.0) {
        return Err(Failure::Usage(format!("--tol must be positive, got {max_diff}")));
    }
    let q = read_quadruple(quadruple)?;
    if !classify(&q, tol)?.spectral {
        return Err(Failure::Domain("round trip needs a spectral quadruple".into()));
    }
    let mut r = weyl_from_quadruple(&q, tol)?;
    if let Some(path) = similarity {
        let json: MatrixJson = serde_json::from_str(&read(path)?)
            .map_err(|e| Failure::Usage(format!("{}: malformed matrix: {e}", path.display())))?;
        let t = json.to_matrix("T")?;
        let (rt, condition) = similarity_transform(&r, &t).map_err(|e| Failure::Usage(e.to_string()))?;
        println!("applied similarity with condition number {}", short(condition));
        r = rt;
    }
    let back = recover(&r, tol, true)?;
    let a = PotentialEvaluator::new(q, tol)?;
    let b = PotentialEvaluator::new(back, tol)?;
    let diff = sup_difference(&a, &b, &grid.points())?;
    println!("sup |v - v'| over {} grid points = {:.3e} (tolerance {:.3e})", grid.len(), diff, max_diff);
    if diff <= max_diff {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("round trip potentials differ by {diff:.3e} > {max_diff:.3e}")))
    }
}

pub struct StabilityRequest {
    pub modes: Vec<PerturbationMode>,
    pub input: PathBuf,
    pub deltas: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub grid: Grid,
}

enum Input {
    Realization(Realization),
    Quadruple(Quadruple),
}

fn read_either(path: &Path) -> Result<Input, Failure> {
    let text = read(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{}: malformed JSON: {e}", path.display())))?;
    let has = |key: &str| value.get(key).is_some();
    if has("A") {
        Ok(Input::Realization(read_realization(path)?))
    } else if has("alpha") {
        Ok(Input::Quadruple(read_quadruple(path)?))
    } else {
        Err(Failure::Usage(format!("{}: neither a realization nor a quadruple file", path.display())))
    }
}

fn print_report(report: &StabilityReport) {
    println!(
        "{} mode: base sup norm on R = {}{}",
        report.mode.as_str(),
        short(report.base_sup_norm),
        if report.boundary { " (boundary case: monotonicity not expected)" } else { "" }
    );
    for row in &report.rows {
        println!(
            "  delta {:.1e}: accepted {}/{}, max_dev {:.3e}",
            row.delta,
            row.accepted,
            row.accepted + row.rejected,
            row.max_dev
        );
    }
    if report.signature_failures > 0 {
        println!("  warning: {} accepted samples failed the signature check", report.signature_failures);
    }
}

pub fn stability(req: &StabilityRequest, tol: &ToleranceConfig) -> Result<(), Failure> {
    let input = read_either(&req.input)?;
    let mut modes = req.modes.clone();
    modes.sort();
    modes.dedup();
    let mut reports = Vec::with_capacity(modes.len());
    for mode in modes {
        let spec = PerturbationSpec {
            mode,
            deltas: req.deltas.clone(),
            samples_per_delta: req.samples,
            seed: req.seed,
            grid: req.grid.clone(),
        };
        spec.validate()?;
        let report = match (mode, &input) {
            (PerturbationMode::Realization, Input::Realization(r)) => perturb_realization_experiment(r, &spec, tol)?,
            (PerturbationMode::Realization, Input::Quadruple(q)) => {
                perturb_realization_experiment(&weyl_from_quadruple(q, tol)?, &spec, tol)?
            }
            (PerturbationMode::Quadruple, Input::Quadruple(q)) => perturb_quadruple_experiment(q, &spec, tol)?,
            (PerturbationMode::Quadruple, Input::Realization(r)) => {
                perturb_quadruple_experiment(&recover(r, tol, false)?, &spec, tol)?
            }
        };
        print_report(&report);
        reports.push(report);
    }
    write(&req.out, &sweep_report(&reports)?)?;
    println!("wrote sweep report to {}", req.out.display());
    Ok(())
}

pub fn sample_potential(quadruple: &Path, grid: &Grid, out: &Path, tol: &ToleranceConfig) -> Result<(), Failure> {
    let ev = PotentialEvaluator::new(read_quadruple(quadruple)?, tol)?;
    let count = write_potential(&ev, grid, out)?;
    println!("wrote {count} potential samples to {}", out.display());
    Ok(())
}

pub fn spectral_data(
    quadruple: &Path,
    density: Option<(&Grid, &Path)>,
    json: Option<&Path>,
    tol: &ToleranceConfig,
) -> Result<(), Failure> {
    let sd = spectral_data_square(&read_quadruple(quadruple)?, tol)?;
    if sd.bound_states.is_empty() {
        println!("no bound states");
    }
    for (t, mult) in &sd.bound_states {
        println!("bound state t = {} (multiplicity {mult})", short(*t));
    }
    if let Some((grid, path)) = density {
        write(path, &sd.density_csv(&grid.points())?)?;
        println!("wrote spectral density on {} points to {}", grid.len(), path.display());
    }
    if let Some(path) = json {
        write(path, &sd.to_json())?;
        println!("wrote spectral data to {}", path.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_arguments() {
        assert_eq!(parse_complex("0+1i").unwrap(), C64::new(0.0, 1.0));
        assert_eq!(parse_complex("-2.5-0.5i").unwrap(), C64::new(-2.5, -0.5));
        assert_eq!(parse_complex("1e-3+2E+1i").unwrap(), C64::new(1e-3, 20.0));
        for bad in ["1+2", "i", "+1i", "1 + 2i", "1+2j", "nan+1i", ""] {
            assert!(parse_complex(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn short_numbers() {
        assert_eq!(short(1.1000000000000003), "1.1");
        assert_eq!(short(3.0), "3");
        assert_eq!(short(0.0), "0");
        assert_eq!(short(2.5e-9), "2.500000e-9");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Failure::from(DirectError::NotSpectral).code(), 2);
        assert_eq!(Failure::from(DirectError::NearReal { im: 0.0, min: 0.1 }).code(), 1);
        assert_eq!(Failure::from(StabilityError::Spec("x".into())).code(), 1);
        assert_eq!(Failure::from(StabilityError::NotSpectral).code(), 2);
        assert_eq!(Failure::from(NumericsError::Singular("x".into())).code(), 3);
    }
}
