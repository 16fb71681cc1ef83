use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZenoError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("wavefunction support reaches the grid boundary ({0:.3e} probability within the guard band)")]
    BoundaryContact(f64),

    #[error("state is not normalized (norm = {0:.12})")]
    NotNormalized(f64),

    #[error("phase cap exceeded: |V|*dt = {phase:.3} rad > cap {cap:.3} rad")]
    PhaseCap { phase: f64, cap: f64 },

    #[error("trajectory lost: collapse survival {0:.3e} below threshold")]
    TrajectoryLost(f64),

    #[error("requested mode {requested} is not bound (eigenvalue {eigenvalue:.4} rad/us)")]
    UnboundMode { requested: usize, eigenvalue: f64 },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("fit did not converge after {0} iterations")]
    FitNotConverged(usize),

    #[error("configuration error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ZenoError>;

impl From<std::io::Error> for ZenoError {
    fn from(e: std::io::Error) -> Self {
        ZenoError::Io(e.to_string())
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> ZenoError {
    ZenoError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
