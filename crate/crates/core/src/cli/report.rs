use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::sandwich::MEstimationResult;

/// JSON output of `mest estimate`. Matrices are row-major; non-finite
/// numbers are written as `null` and read back as NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub estimator: String,
    #[serde(with = "nullable::vec")]
    pub estimates: Vec<f64>,
    #[serde(with = "nullable::matrix")]
    pub vcov: Vec<Vec<f64>>,
    #[serde(with = "nullable::matrix_map")]
    pub corrections: IndexMap<String, Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub correction_errors: IndexMap<String, String>,
    pub diagnostics: ReportDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    #[serde(with = "nullable::scalar")]
    pub residual_norm: f64,
    pub m: usize,
    pub p: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl RunReport {
    pub fn from_result(estimator: &str, r: &MEstimationResult) -> Self {
        let mut corrections = IndexMap::new();
        let mut correction_errors = IndexMap::new();
        for (name, c) in &r.corrections {
            match c {
                Ok(m) => {
                    corrections.insert(name.clone(), rows(m));
                }
                Err(e) => {
                    correction_errors.insert(name.clone(), e.clone());
                }
            }
        }
        let d = &r.diagnostics;
        RunReport {
            estimator: estimator.to_string(),
            estimates: r.theta_hat.to_vec(),
            vcov: rows(&r.sigma_hat),
            corrections,
            correction_errors,
            diagnostics: ReportDiagnostics {
                converged: d.converged,
                iterations: d.iterations,
                residual_norm: d.residual_norm,
                m: d.m,
                p: d.p,
                warnings: d.warnings.clone(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    fn wrap(x: f64) -> Option<f64> {
        x.is_finite().then_some(x)
    }

    fn unwrap(x: Option<f64>) -> f64 {
        x.unwrap_or(f64::NAN)
    }

    pub mod scalar {
        use super::*;
        use serde::Serialize;

        pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
            wrap(*x).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            Ok(unwrap(Option::deserialize(d)?))
        }
    }

    pub mod vec {
        use super::*;
        use serde::Serialize;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|x| wrap(*x)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<Option<f64>>::deserialize(d)?.into_iter().map(unwrap).collect())
        }
    }

    pub mod matrix {
        use super::*;
        use serde::Serialize;

        pub(crate) fn to_opt(m: &[Vec<f64>]) -> Vec<Vec<Option<f64>>> {
            m.iter().map(|r| r.iter().map(|x| wrap(*x)).collect()).collect()
        }

        pub(crate) fn from_opt(m: Vec<Vec<Option<f64>>>) -> Vec<Vec<f64>> {
            m.into_iter().map(|r| r.into_iter().map(unwrap).collect()).collect()
        }

        pub fn serialize<S: Serializer>(m: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
            to_opt(m).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
            Ok(from_opt(Vec::deserialize(d)?))
        }
    }

    pub mod matrix_map {
        use super::matrix::{from_opt, to_opt};
        use super::*;
        use indexmap::IndexMap;
        use serde::Serialize;

        pub fn serialize<S: Serializer>(m: &IndexMap<String, Vec<Vec<f64>>>, s: S) -> Result<S::Ok, S::Error> {
            m.iter()
                .map(|(k, v)| (k, to_opt(v)))
                .collect::<IndexMap<_, _>>()
                .serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<IndexMap<String, Vec<Vec<f64>>>, D::Error> {
            let raw = IndexMap::<String, Vec<Vec<Option<f64>>>>::deserialize(d)?;
            Ok(raw.into_iter().map(|(k, v)| (k, from_opt(v))).collect())
        }
    }
}
