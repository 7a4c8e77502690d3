use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("square matrix required, got {rows}x{cols}")]
    SquareRequired { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid node index {node} (graph has {count} nodes)")]
    InvalidNode { node: usize, count: usize },

    #[error("graph is not strongly connected: node {root} cannot reach every node")]
    NotStronglyConnected { root: usize },

    #[error("empty node set or row selection")]
    EmptySelection,

    #[error("no feasible leader set exists within the search caps")]
    NoFeasibleLeaderSet,

    #[error("residual too large in {check}: {residual:e} > {tolerance:e}")]
    ResidualTooLarge {
        check: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("reduced pair (A_D, C_D) is not detectable")]
    NotDetectable,

    #[error("gain synthesis failed: {0}")]
    SynthesisFailed(String),

    #[error("naive observer decomposition failed: {0}")]
    DecompositionFailed(String),

    #[error("mode unsupported for this model: {0}")]
    ModeUnsupported(String),

    #[error("invalid model: {0}")]
    Validation(String),

    #[error("invalid tolerance configuration: {0}")]
    InvalidTolerance(String),

    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Csv(_) => 4,
            Error::NoFeasibleLeaderSet => 3,
            _ => 2,
        }
    }
}
