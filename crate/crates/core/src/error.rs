use thiserror::Error;

/// Errors produced anywhere in the compass toolkit.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum CompassError {
    #[error("invalid spin quantum number {0}: 2s must be a positive integer")]
    InvalidSpin(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("site {site} out of range for {count} subsystems")]
    SiteOutOfRange { site: usize, count: usize },

    #[error("matrix is not Hermitian (max |M - M^dagger| = {0:e})")]
    NotHermitian(f64),

    #[error("singular linear system (smallest/largest pivot ratio {pivot_ratio:e})")]
    Singular { pivot_ratio: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid control field: {0}")]
    InvalidControl(String),

    #[error("step size underflow at t = {t} us (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("trace drift {drift:e} exceeds tolerance at t = {t} us")]
    TraceDrift { t: f64, drift: f64 },

    #[error("integration window t_end = {t_end} us too short; need at least {required} us")]
    InsufficientWindow { t_end: f64, required: f64 },

    #[error("evaluation failed at theta = {theta}: {message}")]
    Evaluation { theta: f64, message: String },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, CompassError>;
