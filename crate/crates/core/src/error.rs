//! Error type shared by every module, plus the process exit codes the CLI
//! maps it onto.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, TsneError>;

#[derive(Debug, Error)]
pub enum TsneError {
    /// One or more invalid configuration values, reported together so a user
    /// can fix a whole flag set in one pass.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    InvalidConfig(Vec<String>),

    /// A single invalid argument to a library call.
    #[error("{0}")]
    InvalidParameter(String),

    /// A triplet addressed a cell outside the matrix shape.
    #[error("triplet ({row}, {col}) out of bounds for a {rows}x{cols} matrix")]
    TripletOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    /// NaN or infinity where a finite value is required.
    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: String, index: usize },

    /// A dataset or artifact file failed to parse; the message carries the
    /// row number or byte offset where the problem sits.
    #[error("{path}: {message}")]
    Malformed { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A pipeline stage failed; names the stage and keeps the cause's exit
    /// semantics.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<TsneError>,
    },

    /// Optimization produced non-finite coordinates.
    #[error(
        "optimization diverged at iteration {iter} \
         (max |gradient| {max_grad:.3e}, learning rate {learning_rate}); \
         lower the learning rate or raise the exaggeration length"
    )]
    Diverged {
        iter: usize,
        max_grad: f64,
        learning_rate: f64,
    },
}

/// Exit code for invalid flags or flag combinations.
pub const EXIT_BAD_ARGS: i32 = 2;
/// Exit code for unreadable or malformed input files.
pub const EXIT_BAD_INPUT: i32 = 3;
/// Exit code for a run that diverged.
pub const EXIT_DIVERGED: i32 = 4;

impl TsneError {
    /// Process exit code the CLI uses for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            TsneError::InvalidConfig(_) | TsneError::InvalidParameter(_) => EXIT_BAD_ARGS,
            TsneError::TripletOutOfBounds { .. } | TsneError::NonFinite { .. } => EXIT_BAD_INPUT,
            TsneError::Malformed { .. } | TsneError::Io(_) => EXIT_BAD_INPUT,
            TsneError::Stage { source, .. } => source.exit_code(),
            TsneError::Diverged { .. } => EXIT_DIVERGED,
        }
    }

    /// Wraps this error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> TsneError {
        TsneError::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
