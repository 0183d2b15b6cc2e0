//! Built-in estimating functions.

mod basic;
mod dr;
mod gee;
mod glm;
mod registry;

pub use basic::{delta_spec, mean_spec, moments_spec, ratio_spec};
pub use dr::doubly_robust_spec;
pub use gee::{gee_spec, GeeConfig};
pub use glm::{linear_score_spec, logistic_score_spec, score_spec};
pub use registry::{build_registered, EstimatorArgs, REGISTRY};

use crate::error::Result;
use crate::model::DataUnit;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Identity link, gaussian variance.
    Linear,
    /// Logit link, binomial variance; response must be 0/1.
    Logistic,
}

/// Rows where `column == equals`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowFilter {
    pub column: String,
    pub equals: f64,
}

impl RowFilter {
    pub fn new(column: impl Into<String>, equals: f64) -> Self {
        RowFilter {
            column: column.into(),
            equals,
        }
    }

    pub(crate) fn indicator(&self, unit: &DataUnit, row: usize) -> Result<f64> {
        Ok(if unit.real(&self.column)?[row] == self.equals {
            1.0
        } else {
            0.0
        })
    }
}

/// A regression model: response, covariates (in design order, after an
/// optional leading intercept) and an optional row subset.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub response: String,
    pub covariates: Vec<String>,
    pub intercept: bool,
    pub subset: Option<RowFilter>,
}

impl ModelSpec {
    pub fn new<S: Into<String>>(kind: ModelKind, response: impl Into<String>, covariates: impl IntoIterator<Item = S>) -> Self {
        ModelSpec {
            kind,
            response: response.into(),
            covariates: covariates.into_iter().map(Into::into).collect(),
            intercept: true,
            subset: None,
        }
    }

    pub fn linear<S: Into<String>>(response: impl Into<String>, covariates: impl IntoIterator<Item = S>) -> Self {
        ModelSpec::new(ModelKind::Linear, response, covariates)
    }

    pub fn logistic<S: Into<String>>(response: impl Into<String>, covariates: impl IntoIterator<Item = S>) -> Self {
        ModelSpec::new(ModelKind::Logistic, response, covariates)
    }

    pub fn without_intercept(mut self) -> Self {
        self.intercept = false;
        self
    }

    pub fn with_subset(mut self, column: impl Into<String>, equals: f64) -> Self {
        self.subset = Some(RowFilter::new(column, equals));
        self
    }

    /// Number of design columns.
    pub fn k(&self) -> usize {
        self.covariates.len() + usize::from(self.intercept)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
