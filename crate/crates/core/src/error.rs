use thiserror::Error;

/// Pipeline stage an error originated in, used to label errors raised by
/// [`crate::sandwich::m_estimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Validate,
    Solve,
    Components,
    Sigma,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Validate => "validate",
            Stage::Solve => "solve",
            Stage::Components => "components",
            Stage::Sigma => "sigma",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error in column `{column}`: {reason}")]
    Schema { column: String, reason: String },

    #[error("unit {unit} returned a vector of length {got}, expected {expected}")]
    Contract {
        unit: usize,
        expected: usize,
        got: usize,
    },

    #[error("invalid stack layout: {0}")]
    Layout(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical derivative failed for coordinate {coordinate}{}", unit_suffix(*.unit))]
    Derivative {
        coordinate: usize,
        unit: Option<usize>,
    },

    #[error("singular matrix in {context}")]
    Singular { context: String },

    #[error(
        "root search did not converge after {iterations} iterations (residual {residual_norm:e})"
    )]
    NonConvergence {
        best: Vec<f64>,
        residual_norm: f64,
        iterations: usize,
    },

    #[error("correction `{name}` failed: {reason}")]
    Correction { name: String, reason: String },

    #[error("ingest error at line {line}: {reason}")]
    Ingest { line: u64, reason: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn unit_suffix(unit: Option<usize>) -> String {
    unit.map(|u| format!(" (unit {u})")).unwrap_or_default()
}

impl Error {
    pub(crate) fn at(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Strips any stage labels.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root_cause(),
            other => other,
        }
    }

    pub(crate) fn schema(column: &str, reason: impl Into<String>) -> Error {
        Error::Schema {
            column: column.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
