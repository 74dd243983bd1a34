use thiserror::Error;

/// Errors raised by parameter validation and the rate model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QkdError {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("QBER is undefined: the sifted rate is zero")]
    UndefinedQber,

    #[error("empty search grid: {0}")]
    EmptyGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, QkdError>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(QkdError::InvalidParameter {
            name,
            value,
            reason: "must lie in [0, 1]",
        })
    }
}

pub(crate) fn check_non_negative(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(QkdError::InvalidParameter {
            name,
            value,
            reason: "must be finite and non-negative",
        })
    }
}
