use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("dangling reference in {context}: `{id}` does not exist")]
    DanglingReference { context: String, id: String },

    #[error("non-positive dimension: {field} of {locus} is {value}")]
    NonPositive {
        field: &'static str,
        locus: String,
        value: f64,
    },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("conflict matrix must be square: row {row} has {len} entries, expected {expected}")]
    NonSquare {
        row: usize,
        len: usize,
        expected: usize,
    },

    #[error("route of flow {flow} is not connected between `{from}` and `{to}`")]
    RouteNotConnected {
        flow: usize,
        from: String,
        to: String,
    },

    #[error("phase {phase} is not valid for intersection {intersection}")]
    InvalidPhase { intersection: usize, phase: usize },

    #[error("unknown intersection index {0}")]
    UnknownIntersection(usize),

    #[error("lane capacity must be at least 1")]
    ZeroCapacity,

    #[error(
        "demand is oversaturated (Y = {y:.3} >= 1); no fixed-time plan exists, use Max-Pressure instead"
    )]
    Oversaturated { y: f64 },

    #[error("replay buffer holds {size} transitions, cannot sample a batch of {batch}")]
    UnderfilledBuffer { size: usize, batch: usize },

    #[error("cannot select an action from an empty Q vector")]
    EmptyQ,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid network configuration: {0}")]
    Config(String),

    #[error("non-finite loss {loss} at train step {step}")]
    NonFiniteLoss { loss: f64, step: u64 },

    #[error("vehicle conservation violated at step {step}: {detail}")]
    Conservation { step: u64, detail: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code class: 2 for data errors, 3 for numerical aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFiniteLoss { .. } => 3,
            _ => 2,
        }
    }
}
