use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("regular graph sampling failed after {attempts} restarts (n={n}, k={k})")]
    GraphSampling { n: usize, k: usize, attempts: usize },

    #[error("matrix exponential overflow: ||A t||_1 = {norm:e}")]
    ExpOverflow { norm: f64 },

    #[error("non-finite entries in {what}")]
    NonFinite { what: &'static str },

    #[error("state normalization vanished (trace = {trace:e})")]
    VanishingNorm { trace: f64 },

    #[error("positivity violated: clipped negative mass {mass:e} exceeds {limit:e}")]
    PositivityViolation { mass: f64, limit: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("linear system is singular; use lambda > 0 ({0})")]
    Singular(String),

    #[error("all feature columns have zero variance")]
    AllColumnsConstant,

    #[error("series diverged: |y| = {value:e} at step {step}")]
    Divergence { step: usize, value: f64 },

    #[error("jump probability per step {total:.3e} exceeds {limit}; decrease dt")]
    StepTooLarge { total: f64, limit: f64 },

    #[error("shift too small: L†L + shift has eigenvalue {min_eigenvalue:e}")]
    ShiftTooSmall { min_eigenvalue: f64 },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("realization {index} (seed {seed}) failed: {source}")]
    Realization {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }

    /// True for errors caused by user input rather than by a failed computation.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::InvalidParameter { .. } | Error::DimensionMismatch { .. })
    }
}
