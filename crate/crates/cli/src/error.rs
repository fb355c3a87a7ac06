use dmdgen::error::Error;
use std::path::Path;
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),

    #[error("{0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Core(e) => core_code(e),
            CliError::Usage(_) | CliError::Io { .. } => 2,
        })
    }
}

fn core_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) | Error::Ingest(_) | Error::ProblemTooLarge { .. } => 2,
        Error::DegenerateBatch { .. } | Error::EmptyModes(_) => 3,
        Error::Decomposition { .. } | Error::Infeasible(_) => 4,
        Error::Pair { source, .. } => core_code(source),
    }
}
