use thiserror::Error;

pub type Result<T, E = DceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DceError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("self-loop on node `{0}`")]
    SelfLoop(String),

    #[error("unknown node label `{label}` (line {line})")]
    UnknownNode { label: String, line: usize },

    #[error("node `{node}` appears twice in cascade `{cascade}`")]
    DuplicateInfection { cascade: String, node: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not symmetric: |w[{row},{col}] - w[{col},{row}]| = {gap:e}")]
    Asymmetric { row: usize, col: usize, gap: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: loss {loss:e} exceeds 1e3 x initial {initial:e}")]
    Diverged {
        epoch: usize,
        loss: f64,
        initial: f64,
    },

    #[error("{0}")]
    Empty(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl DceError {
    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            DceError::Parse { .. } => "parse",
            DceError::SelfLoop(_) => "self_loop",
            DceError::UnknownNode { .. } => "unknown_node",
            DceError::DuplicateInfection { .. } => "duplicate_infection",
            DceError::InvalidArgument(_) => "invalid_argument",
            DceError::Shape(_) => "shape",
            DceError::Asymmetric { .. } => "asymmetric",
            DceError::NonFinite(_) => "non_finite",
            DceError::Diverged { .. } => "diverged",
            DceError::Empty(_) => "empty",
            DceError::Io(_) => "io",
        }
    }
}
