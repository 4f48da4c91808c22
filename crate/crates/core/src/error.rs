use thiserror::Error;

use crate::model::Diagnostic;

/// Errors raised while constructing or converting problem data.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid problem data: {}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("invalid field `{field}`: {reason}")]
    Field { field: String, reason: String },
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Hard failures of the solver. Infeasibility and iteration limits are
/// reported through [`crate::SolveStatus`], not here.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("factorization failed: non-positive pivot in {context}")]
    FactorizationFailure { context: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid option: {0}")]
    InvalidOption(String),
}
