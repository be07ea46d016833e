use thiserror::Error;

use crate::curvature_model::HypothesisReport;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("curvature data fails the blow-up hypotheses")]
    Hypothesis(Box<HypothesisReport>),

    #[error("reduced system is degenerate: {0}")]
    Degenerate(String),

    #[error("transversality fails: the reduced solution has d0 = 0")]
    Transversality,

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("epsilon = {epsilon} lies on the wrong branch (expected sign {expected})")]
    Branch { expected: i8, epsilon: f64 },

    #[error("data violate the Neumann compatibility condition: defect {defect:e} exceeds {tolerance:e}")]
    Compatibility { defect: f64, tolerance: f64 },

    #[error("fixed point iteration diverged at step {step} (ratio {ratio})")]
    Divergence { step: usize, ratio: f64 },

    #[error("linear solver failure: {0}")]
    LinearSolver(String),

    #[error("quadrature accuracy not reached: {0}")]
    Accuracy(String),

    #[error("malformed curvature description: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
