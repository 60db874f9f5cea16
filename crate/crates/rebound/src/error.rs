use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: expected length {expected}, got {got}")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty batch")]
    EmptyBatch,

    /// Normalized losses divide by the label norm and are only defined on
    /// labels above the floor; callers must gate with the matching region.
    #[error("label norm {norm} is below the floor {floor}")]
    LabelBelowFloor { norm: f64, floor: f64 },

    #[error("no impact: ball is not approaching the paddle plane")]
    NoImpact,

    #[error("infeasible flight: ball never reaches the hit plane")]
    InfeasibleFlight,

    #[error("rollout horizon {horizon} needs {expected} actions, got {got}")]
    HorizonMismatch {
        horizon: usize,
        expected: usize,
        got: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("training aborted at iteration {iteration}: {reason}")]
    TrainAborted { iteration: usize, reason: String },

    #[error("action solve failed: {0}")]
    Solve(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
