use thiserror::Error;

/// Errors raised across the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("signal dimension {signal_dim} must be smaller than the array size {antennas}")]
    SignalDimension { signal_dim: usize, antennas: usize },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("eigensolver did not converge (operand condition estimate {condition:.3e})")]
    EigenNonConvergence { condition: f64 },

    #[error("total signal power is numerically zero")]
    ZeroSignalPower,

    #[error("user {user} already holds {paths} paths, budget {budget}")]
    AtBudget { user: usize, paths: usize, budget: usize },

    #[error("cannot quantize a zero vector: direction undefined")]
    ZeroVector,

    #[error("codeword index {index} out of range for a codebook of {size} words")]
    CodewordIndex { index: usize, size: usize },

    #[error("codebook with {bits} bits is too large to materialize")]
    CodebookTooLarge { bits: u32 },

    #[error("infeasible bound: {0}")]
    InfeasibleBound(String),

    #[error("unknown sweep axis `{0}`")]
    UnknownAxis(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
