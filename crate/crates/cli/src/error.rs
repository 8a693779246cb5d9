use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    ConfigParse { path: PathBuf, message: String },

    #[error("{path}{}: `{field}`: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    ConfigField {
        path: PathBuf,
        line: Option<usize>,
        field: String,
        message: String,
    },

    #[error("{path}: row {row}: {message}")]
    Ingest { path: PathBuf, row: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] noisefield::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2 for configuration and input validation, 3 for numerical failures,
    /// 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        use noisefield::Error as E;
        match self {
            CliError::ConfigParse { .. } | CliError::ConfigField { .. } | CliError::Ingest { .. } => 2,
            CliError::Io { .. } => 4,
            CliError::Core(E::NumericalFailure(_) | E::DegenerateVariance(_)) => 3,
            CliError::Core(_) => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
