//! M-estimation: roots of stacked estimating equations, empirical sandwich
//! variance and finite-sample corrections.

pub mod cli;
pub mod corrections;
pub mod data;
pub mod error;
pub mod estimators;
pub mod model;
pub mod numderiv;
pub mod rootfind;
pub mod sandwich;

pub use corrections::{CorrectionArgs, CorrectionSpec};
pub use error::{Error, Result, Stage};
pub use model::{DataUnit, EstimatorSpec, ParameterVector, UnitPartition, UnitPsi};
pub use numderiv::DerivControl;
pub use rootfind::RootControl;
pub use sandwich::{compute_sigma, m_estimate, MEstimationResult, Roots, SandwichComponents};
