use std::fmt;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Input { file: String, line: usize, message: String },

    #[error(transparent)]
    Model(#[from] demandplan_core::Error),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

impl SimError {
    pub fn config(path: impl Into<String>, message: impl fmt::Display) -> Self {
        SimError::Config {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config { .. } => 2,
            _ => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SimError::Config { .. } => "config",
            SimError::Io { .. } => "io",
            SimError::Input { .. } => "input",
            SimError::Model(_) => "runtime",
        }
    }

    /// Single-line `error kind=... message="..."` form for the CLI.
    pub fn machine_line(&self) -> String {
        let msg = self.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
        match self {
            SimError::Config { path, .. } => format!("error kind=config path={path} message=\"{msg}\""),
            _ => format!("error kind={} message=\"{msg}\"", self.kind()),
        }
    }
}
