//! `mest` command line: `estimate` runs a registered estimator on a CSV file
//! and prints a JSON report; `simulate` writes synthetic datasets.
//!
//! Exit codes: 0 success, 1 usage, ingest or estimation error, 2 root search
//! did not converge (the report is still written, with `converged: false`).

mod args;
mod report;

use std::io::Write;
use std::path::{Path, PathBuf};

pub use args::{Cli, Command, EstimateArgs, SimulateArgs, SimulateKind};
pub use report::{ReportDiagnostics, RunReport};

use crate::corrections::CorrectionSpec;
use crate::data::generate::{gen_geexex, gen_lunceford, gen_sine_series, GenConfig};
use crate::data::{partition_units, read_csv, write_csv_to, Dataset, SchemaHints};
use crate::error::{Error, Result};
use crate::estimators::{build_registered, EstimatorArgs};
use crate::model::ParameterVector;
use crate::numderiv::DerivControl;
use crate::rootfind::RootControl;
use crate::sandwich::{m_estimate_best_effort, Roots};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "MEST_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub enum RootsRequest {
    Start(Vec<f64>),
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRequest {
    pub estimator: String,
    pub args: EstimatorArgs,
    pub data_path: PathBuf,
    pub unit_col: Option<String>,
    pub roots: RootsRequest,
    /// `name:key=value,...` strings.
    pub corrections: Vec<String>,
    pub deriv: DerivControl,
    pub abs_tol: Option<f64>,
    pub max_iter: Option<usize>,
}

/// Runs an estimation request on the file named in `req`.
pub fn cmd_estimate(req: &RunRequest) -> Result<RunReport> {
    let ds = read_csv(&req.data_path, &SchemaHints::new())?;
    estimate_dataset(req, &ds)
}

/// [`cmd_estimate`] on an already loaded dataset.
pub fn estimate_dataset(req: &RunRequest, ds: &Dataset) -> Result<RunReport> {
    let spec = build_registered(&req.estimator, &req.args)?;
    let corrections = req
        .corrections
        .iter()
        .map(|c| CorrectionSpec::parse(c))
        .collect::<Result<Vec<_>>>()?;
    let roots = match &req.roots {
        RootsRequest::Fixed(v) => Roots::Fixed(ParameterVector::new(v.clone())?),
        RootsRequest::Start(v) => {
            // --deriv is for the bread; Newton keeps its own default
            let mut ctrl = RootControl::new(ParameterVector::new(v.clone())?);
            if let Some(t) = req.abs_tol {
                ctrl = ctrl.with_abs_tol(t)?;
            }
            if let Some(n) = req.max_iter {
                ctrl = ctrl.with_max_iter(n)?;
            }
            Roots::Solve(ctrl)
        }
    };
    let expected = spec.p();
    let given = match &req.roots {
        RootsRequest::Start(v) | RootsRequest::Fixed(v) => v.len(),
    };
    if given != expected {
        return Err(Error::Argument(format!(
            "estimator `{}` has {expected} parameters but {given} values were given",
            req.estimator
        )));
    }
    let partition = partition_units(ds, req.unit_col.as_deref())?;
    let result = m_estimate_best_effort(&spec, &partition, &roots, &req.deriv, &corrections)?;
    Ok(RunReport::from_result(&req.estimator, &result))
}

/// Generates a dataset for `simulate`.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<Dataset> {
    match args.kind {
        SimulateKind::Geexex => gen_geexex(args.m.unwrap_or(100), args.seed),
        SimulateKind::Sine => gen_sine_series(args.n.unwrap_or(100), args.seed),
        SimulateKind::Lunceford => {
            let mut cfg = GenConfig::with_defaults(args.n.unwrap_or(1000), args.seed);
            if let Some(b) = &args.beta {
                cfg.beta = b.clone();
            }
            if let Some(v) = &args.nu {
                cfg.nu = v.clone();
            }
            if let Some(x) = &args.xi {
                cfg.xi = x.clone();
            }
            gen_lunceford(&cfg)
        }
    }
}

fn write_out(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(path) => {
            let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
            f(&mut file)?;
            file.flush()?;
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}

fn configure_threads() {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("warning: could not set {THREADS_ENV}={n}: {e}");
            }
        }
        _ => eprintln!("warning: ignoring {THREADS_ENV}={raw:?}; expected a positive integer"),
    }
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::Parser;
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match cli.command {
        Command::Estimate(a) => {
            let req = match a.to_request() {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_ERROR;
                }
            };
            let report = match cmd_estimate(&req) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_ERROR;
                }
            };
            for w in &report.diagnostics.warnings {
                eprintln!("warning: {w}");
            }
            for (name, e) in &report.correction_errors {
                eprintln!("warning: correction `{name}` failed: {e}");
            }
            let json = report.to_json();
            if let Err(e) = write_out(a.output.as_deref(), |w| Ok(writeln!(w, "{json}")?)) {
                eprintln!("error: {e}");
                return EXIT_ERROR;
            }
            if report.diagnostics.converged {
                EXIT_OK
            } else {
                eprintln!(
                    "error: root search did not converge (residual {:e}); estimates are the best iterate",
                    report.diagnostics.residual_norm
                );
                EXIT_NOT_CONVERGED
            }
        }
        Command::Simulate(a) => {
            let res = cmd_simulate(&a).and_then(|ds| write_out(a.out.as_deref(), |w| write_csv_to(&ds, w)));
            match res {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_ERROR
                }
            }
        }
    }
}
