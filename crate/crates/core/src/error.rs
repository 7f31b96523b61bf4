use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad argument or configuration supplied by the caller.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data that violates a documented schema or invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Validation error tied to a specific line of an input file.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A pipeline stage failed; wraps the underlying cause.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

/// Process exit status classes used by the command-line tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Success = 0,
    Usage = 1,
    DataValidation = 2,
    Numeric = 3,
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: msg.into(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn exit_kind(&self) -> ExitKind {
        match self {
            Error::InvalidArgument(_) => ExitKind::Usage,
            Error::Validation(_) | Error::Parse { .. } | Error::Io { .. } => {
                ExitKind::DataValidation
            }
            Error::Numeric(_) => ExitKind::Numeric,
            Error::Stage { source, .. } => source.exit_kind(),
        }
    }
}

/// Attach a stage name to the error side of a result.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_kinds_follow_the_wrapped_cause() {
        assert_eq!(Error::invalid("x").exit_kind(), ExitKind::Usage);
        assert_eq!(Error::validation("x").exit_kind(), ExitKind::DataValidation);
        assert_eq!(Error::numeric("x").exit_kind(), ExitKind::Numeric);
        let wrapped = Error::numeric("nan").in_stage("fuse-train");
        assert_eq!(wrapped.exit_kind(), ExitKind::Numeric);
        assert!(wrapped.to_string().contains("fuse-train"));
    }
}
