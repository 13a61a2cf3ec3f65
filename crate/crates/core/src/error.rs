use serde::Serialize;
use thiserror::Error;

/// Final feasibility slacks carried by a projection solver failure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverSlacks {
    pub slack_inf: f64,
    pub slack_quad: f64,
    pub slack_linf_design: Option<f64>,
    pub lambda_final: f64,
    pub escalations: usize,
}

#[derive(Debug, Error)]
pub enum HitsError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column '{column}': cannot read '{value}' as a finite number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate loading: the loading vector has zero norm")]
    DegenerateLoading,

    #[error("degenerate variance: estimate {delta_hat} has zero estimated variance")]
    DegenerateVariance { delta_hat: f64 },

    #[error("projection solver failed after {} escalations (lambda = {}, slack_inf = {}, slack_quad = {})",
        .0.escalations, .0.lambda_final, .0.slack_inf, .0.slack_quad)]
    SolverFailure(SolverSlacks),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("simulation failed: {failed} of {reps} replications failed")]
    SimulationFailed { failed: usize, reps: usize },
}

impl HitsError {
    /// True for errors raised by the numerical solvers rather than by bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            HitsError::SolverFailure(_)
                | HitsError::DegenerateVariance { .. }
                | HitsError::SimulationFailed { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, HitsError>;
