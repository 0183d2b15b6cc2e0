use super::{
    delta_spec, doubly_robust_spec, gee_spec, linear_score_spec, logistic_score_spec, mean_spec, moments_spec,
    ratio_spec, GeeConfig, ModelKind, ModelSpec, RowFilter,
};
use crate::error::{Error, Result};
use crate::model::EstimatorSpec;

/// Names accepted by [`build_registered`].
pub const REGISTRY: [&str; 8] = [
    "mean",
    "moments",
    "ratio",
    "delta",
    "linear",
    "logistic",
    "gee",
    "doubly_robust",
];

/// Column and configuration arguments for registered estimators. Unset
/// fields fall back to the defaults noted on each.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimatorArgs {
    /// mean, moments, delta. Default `Y`.
    pub y: Option<String>,
    /// ratio numerator. Default `Y1`.
    pub y1: Option<String>,
    /// ratio denominator. Default `Y2`.
    pub y2: Option<String>,
    /// linear, logistic, gee, doubly_robust outcome. Default `Y`.
    pub response: Option<String>,
    pub covariates: Vec<String>,
    pub no_intercept: bool,
    pub subset: Option<RowFilter>,
    /// gee: Linear (identity link) or Logistic (logit link). Default Linear.
    pub kind: Option<ModelKind>,
    /// gee working correlation. Default 0.
    pub alpha: Option<f64>,
    /// gee scale. Default 1.
    pub phi: Option<f64>,
    /// doubly_robust treatment column. Default `Z`.
    pub treatment: Option<String>,
    pub propensity_covariates: Vec<String>,
    pub outcome_covariates: Vec<String>,
}

impl EstimatorArgs {
    fn col(v: &Option<String>, default: &str) -> String {
        v.clone().unwrap_or_else(|| default.to_string())
    }

    fn model(&self, kind: ModelKind) -> ModelSpec {
        let mut m = ModelSpec::new(kind, Self::col(&self.response, "Y"), self.covariates.iter().cloned());
        m.intercept = !self.no_intercept;
        m.subset = self.subset.clone();
        m
    }
}

/// Builds the registered estimator `name`.
pub fn build_registered(name: &str, args: &EstimatorArgs) -> Result<EstimatorSpec> {
    match name {
        "mean" => Ok(mean_spec(&EstimatorArgs::col(&args.y, "Y"))),
        "moments" => Ok(moments_spec(&EstimatorArgs::col(&args.y, "Y"))),
        "delta" => Ok(delta_spec(&EstimatorArgs::col(&args.y, "Y"))),
        "ratio" => Ok(ratio_spec(
            &EstimatorArgs::col(&args.y1, "Y1"),
            &EstimatorArgs::col(&args.y2, "Y2"),
        )),
        "linear" => linear_score_spec(&args.model(ModelKind::Linear)),
        "logistic" => logistic_score_spec(&args.model(ModelKind::Logistic)),
        "gee" => gee_spec(&GeeConfig::new(
            args.model(args.kind.unwrap_or(ModelKind::Linear)),
            args.alpha.unwrap_or(0.0),
            args.phi.unwrap_or(1.0),
        )),
        "doubly_robust" => {
            let z = EstimatorArgs::col(&args.treatment, "Z");
            let y = EstimatorArgs::col(&args.response, "Y");
            let prop = ModelSpec::logistic(z, args.propensity_covariates.iter().cloned());
            let out = ModelSpec::linear(y, args.outcome_covariates.iter().cloned());
            doubly_robust_spec(&prop, &out, &out)
        }
        other => Err(Error::Argument(format!(
            "unknown estimator `{other}`; registered: {}",
            REGISTRY.join(", ")
        ))),
    }
}
