//! `dirac-inverse`: file-based front end for the direct and inverse problems.
//!
//! Exit codes: 0 success, 1 usage or schema error, 2 domain precondition
//! failed, 3 numerical failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dirac_inverse::potential::Grid;
use dirac_inverse::stability_lab::PerturbationMode;
use dirac_inverse::C64;

use commands::Failure;

#[derive(Debug, Parser)]
#[command(name = "dirac-inverse", version, about = "Direct and inverse spectral problems for Dirac systems with rational Weyl functions")]
struct Cli {
    /// JSON file overriding the default tolerances.
    #[arg(long, global = true, value_name = "FILE")]
    tolerances: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Recover the generating quadruple from a realization of the Weyl function.
    SolveInverse(SolveInverseArgs),
    /// Realization of the Weyl function of a quadruple.
    SolveDirect(SolveDirectArgs),
    /// Numerically certify the Weyl function at points of the upper half-plane.
    Verify(VerifyArgs),
    /// Quadruple -> Weyl function -> recovered quadruple; compare potentials.
    RoundTrip(RoundTripArgs),
    /// Perturbation sweeps of realizations or quadruples.
    Stability(StabilityArgs),
    /// Sample the potential on a grid.
    SamplePotential(SamplePotentialArgs),
    /// Bound states and spectral density (m1 = m2).
    SpectralData(SpectralDataArgs),
}

#[derive(Debug, Args)]
struct SolveInverseArgs {
    /// Realization JSON.
    #[arg(long, value_name = "FILE")]
    weyl: PathBuf,
    /// Where to write the recovered quadruple JSON.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also write the potential CSV here.
    #[arg(long, value_name = "FILE", requires = "grid")]
    potential: Option<PathBuf>,
    #[arg(long, value_name = "a:b:h", allow_hyphen_values = true, requires = "potential")]
    grid: Option<Grid>,
    /// Relative Riccati residual tolerance.
    #[arg(long, value_name = "T")]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct SolveDirectArgs {
    #[arg(long, value_name = "FILE")]
    quadruple: PathBuf,
    /// Where to write the realization JSON.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, value_name = "FILE")]
    quadruple: PathBuf,
    /// Spectral parameter as RE+IMi; repeatable.
    #[arg(long = "z", value_name = "RE+IMi", allow_hyphen_values = true, value_parser = commands::parse_complex, default_value = "0+1i")]
    z: Vec<C64>,
    /// Integration length; defaults to 12 / Im z.
    #[arg(long, value_name = "X")]
    xmax: Option<f64>,
}

#[derive(Debug, Args)]
struct RoundTripArgs {
    #[arg(long, value_name = "FILE")]
    quadruple: PathBuf,
    #[arg(long, value_name = "a:b:h", allow_hyphen_values = true)]
    grid: Grid,
    /// Largest accepted sup difference of the potentials.
    #[arg(long, value_name = "T")]
    tol: f64,
    /// Matrix JSON T; the Weyl realization is replaced by {T^-1 A T, T^-1 B, C T}.
    #[arg(long, value_name = "FILE")]
    similarity: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StabilityArgs {
    /// `realization`, `quadruple`, or both comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    mode: Vec<PerturbationMode>,
    /// Realization or quadruple JSON; converted as the mode requires.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Strictly decreasing perturbation sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    delta: Vec<f64>,
    #[arg(long, value_name = "N")]
    samples: usize,
    #[arg(long, value_name = "S")]
    seed: u64,
    /// CSV output.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Grid for the potential deviation in quadruple mode.
    #[arg(long, value_name = "a:b:h", allow_hyphen_values = true, default_value = "0:20:0.05")]
    grid: Grid,
}

#[derive(Debug, Args)]
struct SamplePotentialArgs {
    #[arg(long, value_name = "FILE")]
    quadruple: PathBuf,
    #[arg(long, value_name = "a:b:h", allow_hyphen_values = true)]
    grid: Grid,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SpectralDataArgs {
    #[arg(long, value_name = "FILE")]
    quadruple: PathBuf,
    #[arg(long, value_name = "a:b:h", allow_hyphen_values = true, requires = "out")]
    density_grid: Option<Grid>,
    /// Density CSV.
    #[arg(long, value_name = "FILE", requires = "density_grid")]
    out: Option<PathBuf>,
    /// Also write bound states and the reduced spectral data as JSON.
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let tol = commands::load_tolerances(cli.tolerances.as_deref())?;
    match cli.command {
        Command::SolveInverse(a) => {
            commands::solve_inverse(&a.weyl, &a.out, a.potential.as_deref().zip(a.grid.as_ref()), a.tol, tol)
        }
        Command::SolveDirect(a) => commands::solve_direct(&a.quadruple, &a.out, &tol),
        Command::Verify(a) => commands::verify(&a.quadruple, &a.z, a.xmax, &tol),
        Command::RoundTrip(a) => commands::round_trip(&a.quadruple, &a.grid, a.tol, a.similarity.as_deref(), &tol),
        Command::Stability(a) => {
            let request = commands::StabilityRequest {
                modes: a.mode,
                input: a.input,
                deltas: a.delta,
                samples: a.samples,
                seed: a.seed,
                out: a.out,
                grid: a.grid,
            };
            commands::stability(&request, &tol)
        }
        Command::SamplePotential(a) => commands::sample_potential(&a.quadruple, &a.grid, &a.out, &tol),
        Command::SpectralData(a) => {
            commands::spectral_data(&a.quadruple, a.density_grid.as_ref().zip(a.out.as_deref()), a.json.as_deref(), &tol)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
