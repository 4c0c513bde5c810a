use ponly::{DataError, Error, SolveError};
use serde_json::{json, Value};
use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum CliError {
    /// Bad flags, missing inputs, malformed files.
    #[error("{0}")]
    Input(String),
    /// The numerics failed; `diagnostic` is written as the artifact.
    #[error("{message}")]
    Numerical { message: String, diagnostic: Value },
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numerical { .. } => 2,
            CliError::ChecksFailed(_) => 3,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::InvalidArgument(m) => CliError::Input(m),
            other => CliError::Numerical {
                message: other.to_string(),
                diagnostic: solve_diagnostic(&other),
            },
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Solve(s) => s.into(),
            Error::Data(d) => d.into(),
            Error::Precondition(m) => CliError::Input(m),
            other => CliError::Numerical {
                message: other.to_string(),
                diagnostic: json!({ "kind": "numerical", "message": other.to_string() }),
            },
        }
    }
}

/// Structured description of a solver failure.
pub fn solve_diagnostic(e: &SolveError) -> Value {
    let message = e.to_string();
    match e {
        SolveError::NonConvergence {
            iterations,
            residual,
            last,
        } => json!({
            "kind": "non_convergence",
            "message": message,
            "iterations": iterations,
            "residual": residual,
            "last": last,
        }),
        SolveError::Divergence { direction, iterations } => json!({
            "kind": "divergence",
            "message": message,
            "direction": direction,
            "iterations": iterations,
        }),
        SolveError::RankDeficient(_) => json!({ "kind": "rank_deficient", "message": message }),
        SolveError::WeightEscalation { rounds, weight } => json!({
            "kind": "weight_escalation",
            "message": message,
            "rounds": rounds,
            "W": weight,
        }),
        SolveError::InvalidArgument(_) => json!({ "kind": "invalid_argument", "message": message }),
        SolveError::Likelihood(_) => json!({ "kind": "likelihood", "message": message }),
    }
}

/// Diagnostic for any library error, used inside check reports.
pub fn error_diagnostic(e: &Error) -> Value {
    match e {
        Error::Solve(s) => solve_diagnostic(s),
        Error::Data(_) => json!({ "kind": "data", "message": e.to_string() }),
        Error::Precondition(_) => json!({ "kind": "precondition", "message": e.to_string() }),
        _ => json!({ "kind": "numerical", "message": e.to_string() }),
    }
}
