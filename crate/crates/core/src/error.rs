use std::fmt;

use thiserror::Error;

/// One item of the structural assumptions a protocol relies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionItem {
    Stabilizable,
    Detectable,
    Observable,
    UniformRankOne,
    LeftInvertible,
    MinimumPhase,
}

impl fmt::Display for AssumptionItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AssumptionItem::Stabilizable => "(A,B) stabilizable",
            AssumptionItem::Detectable => "(C,A) detectable",
            AssumptionItem::Observable => "(C,A) observable",
            AssumptionItem::UniformRankOne => "uniform rank with infinite zeros of order 1 (rank CB = m)",
            AssumptionItem::LeftInvertible => "left-invertible (no pre-compensator is constructed for this case)",
            AssumptionItem::MinimumPhase => "minimum-phase (all invariant zeros in Re < 0)",
        };
        f.write_str(s)
    }
}

fn join_items(items: &[AssumptionItem]) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid agent model: {0}")]
    InvalidAgent(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("(A, B) is not stabilizable")]
    NotStabilizable,

    #[error("(C, A) is not detectable")]
    NotDetectable,

    #[error("Riccati iteration did not reach the residual target (residual {residual:.3e})")]
    SolverDivergence { residual: f64 },

    #[error("agent violates protocol assumptions: {}", join_items(.0))]
    AssumptionViolated(Vec<AssumptionItem>),

    #[error("graph is not strongly connected (zero eigenvalue of L is not simple)")]
    NotStronglyConnected,

    #[error("non-positive input to {0}")]
    NonPositiveInput(&'static str),

    #[error("state became non-finite or exceeded the divergence guard at t = {time} (agent {agent})")]
    NonFiniteState { time: f64, agent: usize },

    #[error("trajectory and decomposition disagree: {0}")]
    Mismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
