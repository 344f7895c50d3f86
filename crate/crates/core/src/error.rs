use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the numerical core and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite position {value} for particle {index}")]
    NonFinitePosition { index: usize, value: f64 },

    #[error("incompatible Poisson right-hand side: charge imbalance {imbalance:e} exceeds tolerance {tolerance:e}")]
    ChargeImbalance { imbalance: f64, tolerance: f64 },

    #[error("non-finite state at step {step} (t = {time}): {what}")]
    NonFiniteState {
        step: usize,
        time: f64,
        what: &'static str,
    },

    #[error("root finding failed for u = {u} (alpha = {alpha}, k = {k})")]
    RootNotFound { u: f64, alpha: f64, k: f64 },

    #[error("velocity quantile undefined for u = {0} (must lie strictly inside (0, 1))")]
    QuantileOutOfRange(f64),

    #[error("symplectic condition violated: residual {residual:e} > {tolerance:e}")]
    NotSymplectic { residual: f64, tolerance: f64 },

    #[error("layer {layer}: {message}")]
    Shape { layer: usize, message: String },

    #[error("non-finite loss in batch {batch}")]
    NonFiniteLoss { batch: usize },

    #[error("training diverged at step {step}: loss {loss:e} exceeds {limit:e}")]
    Diverged { step: usize, loss: f64, limit: f64 },

    #[error("optimizer aborted after {0} consecutive non-finite gradients")]
    TooManySkippedUpdates(usize),

    #[error("watch duration {s} too large: longest trajectory has {longest} states")]
    WatchTooLong { s: usize, longest: usize },

    #[error("rate fit needs at least 3 peaks in [{t0}, {t1}], found {found}; widen the window")]
    TooFewPeaks { t0: f64, t1: f64, found: usize },

    #[error("{path}: bad magic {found:?}, expected {expected:?}")]
    BadMagic {
        path: PathBuf,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("{path}: format version {found} is newer than supported {supported}")]
    IncompatibleVersion {
        path: PathBuf,
        found: u16,
        supported: u16,
    },

    #[error("{path}: checksum mismatch at offset {offset}")]
    Checksum { path: PathBuf, offset: u64 },

    #[error("{path}: corrupt file: {message}")]
    Corrupt { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short machine-parsable class name, used by the CLI for its one-line error reports.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::NonFinitePosition { .. } | Error::NonFiniteState { .. } => "non-finite",
            Error::ChargeImbalance { .. } => "charge-imbalance",
            Error::RootNotFound { .. } | Error::QuantileOutOfRange(_) => "sampling",
            Error::NotSymplectic { .. } => "not-symplectic",
            Error::Shape { .. } => "shape",
            Error::NonFiniteLoss { .. }
            | Error::Diverged { .. }
            | Error::TooManySkippedUpdates(_)
            | Error::WatchTooLong { .. } => "training",
            Error::TooFewPeaks { .. } => "rate-fit",
            Error::BadMagic { .. }
            | Error::IncompatibleVersion { .. }
            | Error::Checksum { .. }
            | Error::Corrupt { .. } => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
