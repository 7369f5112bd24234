use thiserror::Error;

use crate::mechanism::Violation;

pub type Result<T> = std::result::Result<T, CbError>;

#[derive(Debug, Error)]
pub enum CbError {
    #[error("invalid mechanism: {}", summarize(.0))]
    InvalidMechanism(Vec<Violation>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge: estimate {value}, error estimate {error:e}")]
    Quadrature { value: f64, error: f64 },

    #[error("flow left the closed left half-plane at t={t}: component {component} has real part {value:e}")]
    DomainEscape {
        t: f64,
        component: usize,
        value: f64,
    },

    #[error("step size underflow at t={t} (last valid time)")]
    StepUnderflow { t: f64 },

    #[error("step budget of {steps} exhausted at t={t}")]
    TooManySteps { t: f64, steps: usize },

    #[error("jump sampling requested with zero tail mass above cutoff {eps}")]
    ZeroTailMass { eps: f64 },

    #[error("generator quadrature {quadrature} disagrees with closed form {closed_form} (relative error {rel_error:e})")]
    GeneratorMismatch {
        quadrature: f64,
        closed_form: f64,
        rel_error: f64,
    },

    #[error("unsupported boundary point: {0}")]
    UnsupportedBoundary(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CbError {
    /// Stable machine-readable name, used in the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            CbError::InvalidMechanism(_) => "invalid-mechanism",
            CbError::InvalidArgument(_) => "invalid-argument",
            CbError::Quadrature { .. } => "quadrature-non-convergence",
            CbError::DomainEscape { .. } => "domain-escape",
            CbError::StepUnderflow { .. } => "step-underflow",
            CbError::TooManySteps { .. } => "too-many-steps",
            CbError::ZeroTailMass { .. } => "zero-tail-mass",
            CbError::GeneratorMismatch { .. } => "generator-mismatch",
            CbError::UnsupportedBoundary(_) => "unsupported-boundary",
            CbError::Io(_) => "io",
            CbError::Json(_) => "malformed-config",
        }
    }
}

fn summarize(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub(crate) fn invalid(msg: impl Into<String>) -> CbError {
    CbError::InvalidArgument(msg.into())
}
