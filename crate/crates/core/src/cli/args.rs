use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::{RootsRequest, RunRequest};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorArgs, ModelKind, RowFilter};
use crate::numderiv::{DerivControl, DerivMethod};

#[derive(Debug, Parser)]
#[command(name = "mest", version, about = "M-estimation with empirical sandwich variance")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Estimate parameters and their covariance from a CSV file.
    Estimate(EstimateArgs),
    /// Write a synthetic dataset as CSV.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DerivArg {
    Central,
    Richardson,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LinkArg {
    Identity,
    Logit,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Registered estimator: mean, moments, ratio, delta, linear, logistic, gee, doubly_robust.
    #[arg(long)]
    pub estimator: String,
    #[arg(long)]
    pub data: PathBuf,
    /// Column grouping rows into independent units; default is one unit per row.
    #[arg(long)]
    pub units: Option<String>,
    /// Comma-separated start values for the root search.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "roots")]
    pub start: Option<Vec<f64>>,
    /// Comma-separated estimates used as θ̂ (with --no-solve).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "no_solve")]
    pub roots: Option<Vec<f64>>,
    #[arg(long, requires = "roots")]
    pub no_solve: bool,
    /// `name:key=value,...`; repeatable. Kinds: fay_bias (b), newey_west (lag), identity.
    #[arg(long = "correction")]
    pub corrections: Vec<String>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Derivative method for the bread matrices.
    #[arg(long, value_enum, default_value = "richardson")]
    pub deriv: DerivArg,
    /// Relative base step; default depends on --deriv.
    #[arg(long)]
    pub deriv_step: Option<f64>,
    #[arg(long, default_value_t = DerivControl::RICHARDSON_LEVELS)]
    pub deriv_levels: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,

    /// mean, moments, delta: outcome column [default: Y].
    #[arg(long)]
    pub y: Option<String>,
    /// ratio numerator [default: Y1].
    #[arg(long)]
    pub y1: Option<String>,
    /// ratio denominator [default: Y2].
    #[arg(long)]
    pub y2: Option<String>,
    /// linear, logistic, gee, doubly_robust outcome [default: Y].
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    #[arg(long)]
    pub no_intercept: bool,
    /// Restrict a score to rows where COL equals VALUE (`COL=VALUE`).
    #[arg(long)]
    pub subset: Option<String>,
    /// gee link; identity uses gaussian variance, logit binomial.
    #[arg(long, value_enum)]
    pub link: Option<LinkArg>,
    /// gee exchangeable working correlation [default: 0].
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// gee scale [default: 1].
    #[arg(long)]
    pub phi: Option<f64>,
    /// doubly_robust treatment column [default: Z].
    #[arg(long)]
    pub treatment: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub propensity_covariates: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub outcome_covariates: Vec<String>,
}

fn names(v: &[String]) -> Vec<String> {
    v.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

impl EstimateArgs {
    pub fn to_request(&self) -> Result<RunRequest> {
        let roots = match (&self.start, &self.roots) {
            (Some(s), None) => RootsRequest::Start(s.clone()),
            (None, Some(r)) => RootsRequest::Fixed(r.clone()),
            _ => return Err(Error::Argument("give exactly one of --start or --roots with --no-solve".into())),
        };
        let deriv = match self.deriv {
            DerivArg::Central => DerivControl::new(
                DerivMethod::Central,
                self.deriv_step.unwrap_or(DerivControl::CENTRAL_STEP),
                self.deriv_levels,
            )?,
            DerivArg::Richardson => DerivControl::new(
                DerivMethod::Richardson,
                self.deriv_step.unwrap_or(DerivControl::RICHARDSON_STEP),
                self.deriv_levels,
            )?,
        };
        let subset = match &self.subset {
            None => None,
            Some(s) => {
                let (col, val) = s
                    .split_once('=')
                    .ok_or_else(|| Error::Argument(format!("--subset expects COL=VALUE, got `{s}`")))?;
                let val: f64 = val
                    .trim()
                    .parse()
                    .map_err(|_| Error::Argument(format!("--subset value `{val}` is not a number")))?;
                Some(RowFilter::new(col.trim(), val))
            }
        };
        let args = EstimatorArgs {
            y: self.y.clone(),
            y1: self.y1.clone(),
            y2: self.y2.clone(),
            response: self.response.clone(),
            covariates: names(&self.covariates),
            no_intercept: self.no_intercept,
            subset,
            kind: self.link.map(|l| match l {
                LinkArg::Identity => ModelKind::Linear,
                LinkArg::Logit => ModelKind::Logistic,
            }),
            alpha: self.alpha,
            phi: self.phi,
            treatment: self.treatment.clone(),
            propensity_covariates: names(&self.propensity_covariates),
            outcome_covariates: names(&self.outcome_covariates),
        };
        Ok(RunRequest {
            estimator: self.estimator.clone(),
            args,
            data_path: self.data.clone(),
            unit_col: self.units.clone(),
            roots,
            corrections: self.corrections.clone(),
            deriv,
            abs_tol: self.abs_tol,
            max_iter: self.max_iter,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimulateKind {
    /// Y1 ~ N(5, 16), Y2 ~ N(2, 1), and a linear-model outcome Y4 on X1, X2.
    Geexex,
    /// Observational study for the doubly robust estimator.
    Lunceford,
    /// x = sin(t), y = 1 + x + N(0, 1) for t = 1..n.
    Sine,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub kind: SimulateKind,
    /// geexex rows [default: 100].
    #[arg(long)]
    pub m: Option<usize>,
    /// lunceford [default: 1000] or sine [default: 100] rows.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// lunceford propensity coefficients (4 values).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Option<Vec<f64>>,
    /// lunceford outcome coefficients on (1, X1, X2, X3, Z) (5 values).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub nu: Option<Vec<f64>>,
    /// lunceford outcome coefficients on (V1, V2, V3) (3 values).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub xi: Option<Vec<f64>>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
