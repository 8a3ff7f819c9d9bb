use std::path::PathBuf;

use thiserror::Error;

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("missing input {}", .0.display())]
    MissingInput(PathBuf),

    #[error("bad input {}: {message}", path.display())]
    BadInput { path: PathBuf, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] gibbs_core::Error),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            HarnessError::MissingInput(path)
        } else {
            HarnessError::Io { path, source }
        }
    }

    /// 2 for configuration problems, 3 for violated preconditions and bad
    /// inputs, 4 for numerical failures and output errors.
    pub fn exit_code(&self) -> i32 {
        use gibbs_core::Error as E;
        match self {
            HarnessError::Config(_) => EXIT_CONFIG,
            HarnessError::MissingInput(_) | HarnessError::BadInput { .. } => EXIT_PRECONDITION,
            HarnessError::Io { .. } => EXIT_NUMERICAL,
            HarnessError::Core(e) => match e {
                E::InvalidParameter(_)
                | E::DimensionMismatch { .. }
                | E::DuplicateLocation(_)
                | E::Precondition(_)
                | E::NotTempered { .. }
                | E::InfeasibleEnvironment
                | E::StateSpaceOverflow { .. }
                | E::Json(_) => EXIT_PRECONDITION,
                E::Diverged { .. } | E::LowAcceptance { .. } | E::Drift { .. } | E::Numerical(_) | E::Io(_) => {
                    EXIT_NUMERICAL
                }
            },
        }
    }
}
