//! Error type shared by every module in the crate.

use std::fmt;

/// Error type for sparse coding operations.
#[derive(Debug, Clone)]
pub enum DscError {
    /// Tensor/kernel geometry violation; the message names the offending shapes.
    Geometry(String),
    /// Layer graph violation (unknown layer, bad topology, missing parent).
    Graph(String),
    /// Configuration file or field error.
    Config(String),
    /// An operation's precondition was not met (empty subset, no modality, ...).
    Precondition(String),
    /// Non-finite values appeared during an update.
    NumericDivergence { layer: String, iteration: usize },
    /// Text rasterization failure (overlong or unsupported name).
    Render(String),
    /// Corpus ingestion failure; names the offending path.
    Ingestion { path: String, message: String },
    /// File I/O failure; names the path.
    Io { path: String, message: String },
    /// Checkpoint or corpus container decode failure.
    Container(String),
}

impl fmt::Display for DscError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DscError::Geometry(msg) => write!(f, "geometry error: {}", msg),
            DscError::Graph(msg) => write!(f, "graph error: {}", msg),
            DscError::Config(msg) => write!(f, "config error: {}", msg),
            DscError::Precondition(msg) => write!(f, "precondition error: {}", msg),
            DscError::NumericDivergence { layer, iteration } => write!(
                f,
                "numeric divergence in layer '{}' at iteration {}",
                layer, iteration
            ),
            DscError::Render(msg) => write!(f, "render error: {}", msg),
            DscError::Ingestion { path, message } => {
                write!(f, "ingestion error for '{}': {}", path, message)
            }
            DscError::Io { path, message } => write!(f, "io error for '{}': {}", path, message),
            DscError::Container(msg) => write!(f, "container error: {}", msg),
        }
    }
}

impl std::error::Error for DscError {}

pub type DscResult<T> = Result<T, DscError>;

impl DscError {
    /// Process exit code the CLI maps this error to.
    ///
    /// 2 = usage/config/geometry problems, 3 = numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            DscError::NumericDivergence { .. } => 3,
            _ => 2,
        }
    }
}
