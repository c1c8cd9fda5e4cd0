use thiserror::Error;

/// Errors raised by the plant model, the solvers and the simulation harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlimpError {
    #[error("invalid cable lengths: {0}")]
    InvalidCables(String),
    #[error("arc angle {arc_angle:.4} rad exceeds the constant-curvature limit of pi/2")]
    ArcAngleOutOfRange { arc_angle: f64 },
    #[error("Euler kinematics singular at pitch {pitch:.6} rad")]
    EulerSingularity { pitch: f64 },
    #[error("mass matrix is not positive definite")]
    MassMatrixNotPositiveDefinite,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("negative weight {0} in weighted residual")]
    NegativeWeight(f64),
    #[error("solver: {0}")]
    Solver(String),
    #[error("measurement timestamp {got} does not follow {last}")]
    OutOfOrderMeasurement { last: f64, got: f64 },
    #[error("estimation window needs at least {needed} measurements, has {have}")]
    WindowTooShort { needed: usize, have: usize },
    #[error("configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, BlimpError>;

impl From<std::io::Error> for BlimpError {
    fn from(e: std::io::Error) -> Self {
        BlimpError::Io(e.to_string())
    }
}

impl From<csv::Error> for BlimpError {
    fn from(e: csv::Error) -> Self {
        BlimpError::Io(e.to_string())
    }
}
