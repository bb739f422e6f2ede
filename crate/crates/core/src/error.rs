use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error classes; each maps to a distinct process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Io,
    Parse,
    Config,
    Numeric,
    Compatibility,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Io => 3,
            ErrorCategory::Parse => 4,
            ErrorCategory::Numeric => 5,
            ErrorCategory::Compatibility => 6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Io => "io",
            ErrorCategory::Parse => "parse",
            ErrorCategory::Config => "config",
            ErrorCategory::Numeric => "numeric",
            ErrorCategory::Compatibility => "compatibility",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter vector has length {actual}, topology expects {expected}")]
    Codec { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite parameter at index {0}")]
    NonFinite(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("no usable rows in dataset")]
    EmptyDataset,

    #[error("column `{0}` is constant; cannot normalize")]
    DegenerateColumn(String),

    #[error("split of {n} rows at train fraction {fraction} leaves an empty side")]
    SplitTooSmall { n: usize, fraction: f64 },

    #[error("correlation undefined for a constant vector")]
    DegenerateCorrelation,

    #[error("objective returned {value} at position [{preview}]")]
    Objective { value: f64, preview: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("incompatible artifacts: {0}")]
    Compatibility(String),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } => ErrorCategory::Io,
            Error::Parse { .. } | Error::EmptyDataset => ErrorCategory::Parse,
            Error::Config(_) | Error::SplitTooSmall { .. } => ErrorCategory::Config,
            Error::Codec { .. }
            | Error::Shape(_)
            | Error::NonFinite(_)
            | Error::DegenerateColumn(_)
            | Error::DegenerateCorrelation
            | Error::Objective { .. } => ErrorCategory::Numeric,
            Error::Compatibility(_) => ErrorCategory::Compatibility,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn objective(value: f64, position: &[f64]) -> Self {
        let mut preview: Vec<String> = position.iter().take(6).map(|x| format!("{x:.6}")).collect();
        if position.len() > 6 {
            preview.push(format!("... ({} values)", position.len()));
        }
        Error::Objective {
            value,
            preview: preview.join(", "),
        }
    }
}
