use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("layout error: {0}")]
    Layout(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid step: {0}")]
    InvalidStep(String),
    #[error("integrator accuracy: trace drift {drift:.3e} exceeds 1e-6; retry with step <= {suggested_step:.3e} s")]
    IntegratorAccuracy { drift: f64, suggested_step: f64 },
    #[error("no convergence after {windows} windows (last distance {last_distance:.3e})")]
    NonConvergence { windows: usize, last_distance: f64 },
    #[error("incomplete schedule: {0}")]
    IncompleteSchedule(String),
    #[error("invalid segment kind: {0}")]
    InvalidKind(String),
    #[error("reconstruction quality: {0}")]
    Reconstruction(String),
    #[error("cutoff/range error: {0}")]
    Range(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("unbounded amplitude: {0}")]
    Unbounded(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("mean-field instability: {0}")]
    Instability(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Config problems are the caller's fault; everything else is a numerical or runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
