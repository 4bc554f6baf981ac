use std::fmt;
use std::path::PathBuf;

use shapsrc_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}", located(path, *line, message))]
    Config {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },
    /// A named input file is missing or unreadable.
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

fn located(path: &std::path::Path, line: Option<usize>, message: &str) -> impl fmt::Display {
    match line {
        Some(l) => format!("{}:{l}: {message}", path.display()),
        None => format!("{}: {message}", path.display()),
    }
}

impl CliError {
    /// 2 for problems with the inputs, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Input { .. } | CliError::Usage(_) => 2,
            CliError::Core(e) => match e.root() {
                CoreError::InvalidInput(_)
                | CoreError::TooLarge { .. }
                | CoreError::CacheFile { .. }
                | CoreError::Io { .. }
                | CoreError::Parse { .. } => 2,
                _ => 1,
            },
        }
    }
}
