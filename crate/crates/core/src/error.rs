use thiserror::Error;

/// Errors raised anywhere in the simulation, solver or I/O layers.
#[derive(Debug, Error)]
pub enum CslError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("noise synthesis failed: {0}")]
    Synthesis(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("trajectory diverged: {0}")]
    Diverged(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("fit domain error: {0}")]
    FitDomain(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("singular intermittency map: {0}")]
    SingularMap(String),
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("grid resolution: {0}")]
    GridResolution(String),
    #[error("unstable time step: {0}")]
    Unstable(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CslError {
    /// Process exit code for this error class: 2 = configuration, 3 = runtime, 4 = divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CslError::InvalidParameter(_)
            | CslError::Config(_)
            | CslError::Unstable(_)
            | CslError::GridResolution(_)
            | CslError::InvalidDimension(_)
            | CslError::SingularMap(_)
            | CslError::Parse { .. } => 2,
            CslError::Diverged(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CslError>;

pub(crate) fn invalid(msg: impl Into<String>) -> CslError {
    CslError::InvalidParameter(msg.into())
}
