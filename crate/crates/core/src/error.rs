use thiserror::Error;

#[derive(Debug, Error)]
pub enum DdmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The walk reached a state where the big-row constraints leave no
    /// feasible direction among the alive coordinates.
    #[error("degenerate walk state: null space of big rows is empty ({alive} alive, {big} big rows)")]
    DegenerateState { alive: usize, big: usize },

    #[error("stalled walk: both step lengths below {threshold:e}")]
    StalledWalk { threshold: f64 },

    #[error("walk exceeded {limit} iterations")]
    Runaway { limit: usize },

    #[error("unsupported design: {0}")]
    UnsupportedDesign(String),

    #[error("rerandomization accepted nothing in {draws} candidate draws")]
    AcceptanceStall { draws: usize },

    #[error("invalid witness: {0}")]
    InvalidWitness(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("cannot standardize column {col}: zero standard deviation")]
    ConstantColumn { col: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl DdmError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        DdmError::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, DdmError>;
