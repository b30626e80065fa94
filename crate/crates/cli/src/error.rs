use std::path::Path;

/// Failures of a command, grouped by the exit code they map to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration, failed audit or failed property check.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    NonConvergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io(_) => 3,
            CliError::NonConvergence(_) => 4,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<mfg_core::Error> for CliError {
    fn from(e: mfg_core::Error) -> Self {
        use mfg_core::Error as E;
        match e {
            E::NonConvergence { .. } | E::PicardNonConvergence { .. } | E::LinearSolve { .. } | E::Slab { .. } => {
                CliError::NonConvergence(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}
