use thiserror::Error;

/// Errors produced by model evaluation and the analysis pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("inadmissible parameters: {0}")]
    Inadmissible(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite derivative stencil value at x = {x:?}, params = {params:?}")]
    NonFinite { x: Vec<f64>, params: Vec<f64> },
    #[error("transition matrix not invertible")]
    SingularTransition,
    #[error("model `{0}` provides no new-infection/transition split")]
    NoSplit(String),
    #[error("non-simple zero eigenvalue")]
    NonSimpleZero,
    #[error("no zero eigenvalue at the DFE (smallest |lambda| = {gap:e})")]
    NoZeroEigenvalue { gap: f64 },
    #[error("invalid bifurcation parameter `{0}`: the DFE depends on it")]
    InvalidBifurcationParam(String),
    #[error("a != 0: c ill-defined (|v.y| = {0:e})")]
    NonzeroA(f64),
    #[error("degenerate: e undefined (c = {0:e})")]
    DegenerateE(f64),
    #[error("hypothesis violated: b = {0:e} is not positive")]
    HypothesisViolated(f64),
    #[error("linear solve failed: {0}")]
    Solve(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("not supported: {0}")]
    Unsupported(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
