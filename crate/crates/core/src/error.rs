use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid boundary: a = {a}, b = {b} (both must be finite and > 0)")]
    InvalidBoundary { a: f64, b: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The slope `b = 0` makes the gamma proposal rate vanish.
    #[error(
        "unsupported boundary: b = 0 with a = {a} > 0; the gamma proposal needs b > 0 \
         (use a constant-boundary method such as Burq-Jones for b = 0)"
    )]
    UnsupportedBoundary { a: f64 },

    /// Consecutive partial sums stopped moving before bracketing the threshold.
    #[error("unresolved comparison at term {index}: bracket width {width:e} below floor for threshold {threshold:e}")]
    UnresolvedComparison {
        index: usize,
        width: f64,
        threshold: f64,
    },

    #[error("degenerate difference: partial-sum increment {n} is zero")]
    DegenerateDifference { n: usize },

    #[error("envelope calibration failed: {0}")]
    CalibrationFailure(String),

    #[error("proposal cap of {cap} exceeded without acceptance")]
    ProposalExhaustion { cap: u64 },

    #[error("empty sample")]
    EmptySample,
}

impl Error {
    /// Short machine-readable tag used on the CLI error stream.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidBoundary { .. } => "invalid_boundary",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::UnsupportedBoundary { .. } => "unsupported_boundary",
            Error::UnresolvedComparison { .. } => "unresolved_comparison",
            Error::DegenerateDifference { .. } => "degenerate_difference",
            Error::CalibrationFailure(_) => "calibration_failure",
            Error::ProposalExhaustion { .. } => "proposal_exhaustion",
            Error::EmptySample => "empty_sample",
        }
    }
}
