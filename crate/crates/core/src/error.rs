use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, arities or layouts that do not agree.
    #[error("structural error: {0}")]
    Structural(String),

    /// A non-finite value appeared during evaluation.
    #[error("non-finite value during {stage}")]
    Numeric { stage: String },

    /// Invalid configuration or arguments.
    #[error("config error: {0}")]
    Config(String),

    /// A coordinate outside the problem domain.
    #[error("point ({x}, {t}) lies outside the domain")]
    Domain { x: f64, t: f64 },

    /// Sensor data does not cover the requested time.
    #[error("sensor at x={x} has no sample covering t={t}")]
    DataGap { x: f64, t: f64 },

    /// Correlation is undefined for constant input.
    #[error("correlation undefined: {0} has zero variance")]
    UndefinedCorrelation(&'static str),

    /// The diagnostic needs information the problem does not carry.
    #[error("unsupported diagnostic: {0}")]
    Unsupported(&'static str),

    #[error("corrupt checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn numeric(stage: impl Into<String>) -> Self {
        Error::Numeric { stage: stage.into() }
    }
}
