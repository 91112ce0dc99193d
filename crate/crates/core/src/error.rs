use thiserror::Error;

/// Failure modes shared across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("operator is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("degenerate spectrum: gap {gap:e} below tolerance {tolerance:e}")]
    Degenerate { gap: f64, tolerance: f64 },

    #[error("gauge anchor component of band {band} has magnitude {magnitude:e}")]
    GaugeSingular { band: usize, magnitude: f64 },

    #[error("quantum state is not normalized (norm^2 = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },

    #[error("bad actions: {0}")]
    BadActions(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("step too large: local error estimate {estimate:e} exceeds {tolerance:e}")]
    StepTooLarge { estimate: f64, tolerance: f64 },

    #[error("non-finite state component at t = {t}")]
    NonFinite { t: f64 },

    #[error("no circular orbit at r = {radius}: radial force {radial_force:e} is not attractive")]
    NoOrbit { radius: f64, radial_force: f64 },

    #[error("invalid loop path: {0}")]
    InvalidPath(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
