use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown bus {0}")]
    UnknownBus(u32),

    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u32 },

    #[error("invalid case: {0}")]
    InvalidCase(String),

    #[error("branch {from}-{to} has zero impedance")]
    ZeroImpedance { from: u32, to: u32 },

    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    #[error("vertex set is not convex")]
    NonConvexPolygon,

    #[error("PCC bus {bus}: {reason}")]
    PccBus { bus: u32, reason: String },

    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Diverged { epoch: usize },

    #[error("bundle schema violation: {0}")]
    Schema(String),

    #[error("missing limit: {0}")]
    MissingLimit(String),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
