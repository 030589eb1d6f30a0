use thiserror::Error;

/// Failures surfaced by the command-line driver, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error at `{field}`: {reason}")]
    Schema { field: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("solver stalled: {0}")]
    Stalled(String),

    #[error("diagnostics failed: {0}")]
    Diagnostics(String),

    #[error(transparent)]
    Solver(#[from] lowrank_sdp::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn schema(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Schema {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } | CliError::Io { .. } | CliError::Input(_) | CliError::Csv(_) => 2,
            CliError::Solver(e) => match e {
                lowrank_sdp::Error::Dimension { .. }
                | lowrank_sdp::Error::InvalidParameter { .. }
                | lowrank_sdp::Error::NonFinite(_)
                | lowrank_sdp::Error::Certificate(_)
                | lowrank_sdp::Error::WrongObjective { .. } => 2,
                _ => 1,
            },
            CliError::Stalled(_) => 3,
            CliError::Diagnostics(_) => 4,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
