use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A configuration field violates its validity range.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    /// Cache (or fixed circuit) power leaves no budget for transmission.
    #[error("{tier} transmit power is non-positive ({watts} W): cache power exhausts the budget")]
    NonPositiveTxPower { tier: &'static str, watts: f64 },

    #[error("file index {index} outside library 1..={library_size}")]
    IndexOutOfLibrary { index: u64, library_size: u64 },

    #[error("negative distance {0} m")]
    NegativeDistance(f64),

    #[error("zero distance: path loss is singular at r = 0")]
    ZeroDistance,

    #[error("quadrature failed for {what}: estimated error {error:e} exceeds tolerance {tolerance:e}")]
    QuadratureFailure {
        what: &'static str,
        error: f64,
        tolerance: f64,
    },

    /// Rejection sampling accepted too few samples to be meaningful.
    #[error("rejection sampling starved: {accepted} accepted out of {attempts} attempts")]
    RejectionStarvation { accepted: u64, attempts: u64 },

    #[error("grid for `{0}` is empty or malformed")]
    EmptyGrid(&'static str),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureFailure { .. } | Error::RejectionStarvation { .. }
        )
    }
}
