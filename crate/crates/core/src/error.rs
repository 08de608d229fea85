use thiserror::Error;

/// Errors raised across the generator, fitter and file layer.
#[derive(Debug, Error)]
pub enum HagError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{stage}: {message}")]
    Infeasible { stage: &'static str, message: String },

    #[error("expected latent tree size {expected:.3e} nodes exceeds the node budget {budget:.3e}")]
    NodeBudget { expected: f64, budget: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl HagError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        HagError::InvalidParameter(msg.into())
    }

    pub fn infeasible(stage: &'static str, msg: impl Into<String>) -> Self {
        HagError::Infeasible {
            stage,
            message: msg.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HagError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code: 1 for domain failures, 2 for I/O and parsing.
    pub fn exit_code(&self) -> i32 {
        match self {
            HagError::InvalidParameter(_) | HagError::Infeasible { .. } | HagError::NodeBudget { .. } => 1,
            HagError::Io { .. } | HagError::Parse(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HagError>;
