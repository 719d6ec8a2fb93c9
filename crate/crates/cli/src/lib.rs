//! Pipeline driver behind the `cpinn` binary.

pub mod commands;
pub mod config;

use std::fmt;

pub use config::ExperimentConfig;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, arguments or shapes.
    Config(String),
    /// Missing, unreadable or inconsistent data files.
    Data(String),
    /// Training produced non-finite values.
    Diverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Diverged(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Diverged(m) => write!(f, "numeric divergence: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<cpinn_core::Error> for CliError {
    fn from(e: cpinn_core::Error) -> Self {
        use cpinn_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Config(_) | E::Structural(_) | E::Domain { .. } | E::Unsupported(_) => CliError::Config(msg),
            E::Numeric { .. } => CliError::Diverged(msg),
            E::DataGap { .. } | E::UndefinedCorrelation(_) | E::Checkpoint { .. } | E::Io(_) | E::Csv(_) => {
                CliError::Data(msg)
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
