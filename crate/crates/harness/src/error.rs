use sbm_sampling::SbmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Input(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Model(#[from] SbmError),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Process exit status for a failed command.
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

impl HarnessError {
    pub fn input(msg: impl Into<String>) -> Self {
        HarnessError::Input(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Numerical degeneracies map to 3, everything else to 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Model(
                SbmError::RepeatedRoots
                | SbmError::ComplexRoots(_)
                | SbmError::Singular(_)
                | SbmError::EmptyObservations
                | SbmError::ImpossibleConfiguration(_),
            ) => EXIT_DEGENERATE,
            _ => EXIT_INPUT,
        }
    }
}
