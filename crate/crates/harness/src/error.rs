use thiserror::Error;

/// Failures of the harness layer on top of the library errors.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] aoreg::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("plot: {0}")]
    Plot(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("table {table}: {message}")]
    Table { table: String, message: String },

    #[error("{0} did not converge")]
    NonConvergence(String),
}

impl HarnessError {
    /// Process exit code: 2 for bad input, 3 for numerical trouble, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(aoreg::Error::Numerical(_)) | HarnessError::NonConvergence(_) => 3,
            HarnessError::Core(aoreg::Error::Io(_))
            | HarnessError::Io(_)
            | HarnessError::Plot(_) => 1,
            HarnessError::Core(_) | HarnessError::Csv(_) | HarnessError::Table { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
