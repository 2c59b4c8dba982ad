use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{stage}: invalid config: {message}")]
    Schema { stage: String, message: String },

    #[error("{stage}: {message}")]
    Numerical { stage: String, message: String },

    #[error("{stage}: i/o failure on {}: {message}", path.display())]
    Io { stage: String, path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io { .. } => 4,
        }
    }

    /// Sort a toolkit error raised while `stage` worked on `path`. Unreadable
    /// or malformed files count as i/o failures.
    pub fn from_core(stage: &str, path: Option<&std::path::Path>, e: tatkit::Error) -> Self {
        use tatkit::Error as E;
        let file = matches!(e, E::Io(_) | E::BadMagic { .. } | E::MalformedHeader(_) | E::Truncated { .. });
        match (file, path) {
            (true, Some(p)) => CliError::Io { stage: stage.into(), path: p.to_path_buf(), message: e.to_string() },
            (true, None) => CliError::Io { stage: stage.into(), path: PathBuf::new(), message: e.to_string() },
            (false, _) => CliError::Numerical { stage: stage.into(), message: format!("[{}] {e}", e.code()) },
        }
    }
}
