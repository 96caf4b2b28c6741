use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayerError {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("non-finite gradient for {param}: analytic {analytic}, numeric {numeric}")]
    NonFiniteGradient {
        param: String,
        analytic: f64,
        numeric: f64,
    },
    #[error("invalid layer: {0}")]
    Invalid(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = LayerError> = std::result::Result<T, E>;

pub(crate) fn shape_err(context: &'static str, expected: impl ToString, actual: impl ToString) -> LayerError {
    LayerError::ShapeMismatch {
        context,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
