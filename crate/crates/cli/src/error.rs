use serde::Serialize;
use serde_json::{json, Value};

/// Machine-readable failure, printed to stderr as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub context: Value,
}

impl CliError {
    pub fn new(code: &str, message: impl Into<String>, context: Value) -> Self {
        CliError {
            code: code.to_string(),
            message: message.into(),
            context,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", message, json!({}))
    }

    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Self::new("io", err.to_string(), json!({ "path": path.display().to_string() }))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

impl From<bpot::Error> for CliError {
    fn from(e: bpot::Error) -> Self {
        use bpot::Error as E;
        let context = match &e {
            E::CovariateOutOfRange { row, col, value } => json!({ "row": row, "col": col, "value": value }),
            E::NotConverged {
                best,
                iterations,
                grad_norm,
            } => json!({ "best": best, "iterations": iterations, "grad_norm": grad_norm }),
            E::NoCovariateMass { x } => json!({ "x": x }),
            _ => json!({}),
        };
        CliError::new(e.code(), e.to_string(), context)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
