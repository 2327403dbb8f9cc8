use thiserror::Error;

#[derive(Debug, Error)]
pub enum FesError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "degenerate calibration: species `{first}` and `{second}` are not separable \
         (condition number {condition:.3e})"
    )]
    DegenerateCalibration {
        first: String,
        second: String,
        condition: f64,
    },

    #[error("no feasible feedback resistance: {0}")]
    NoFeasibleGain(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FesError>;

pub(crate) fn invalid(msg: impl Into<String>) -> FesError {
    FesError::InvalidArgument(msg.into())
}

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite, got {value}")))
    }
}

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {value}")))
    }
}
