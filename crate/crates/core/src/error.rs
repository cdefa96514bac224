use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the monitoring engine.
///
/// Each variant maps onto one of the CLI exit classes (config, data, numerical).
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("rank-deficient design: column(s) {columns:?} are collinear with earlier columns")]
    RankDeficient { columns: Vec<String> },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error classes, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Io { .. } => ErrorClass::Config,
            Error::Data(_) | Error::Domain(_) => ErrorClass::Data,
            Error::Calibration(_) | Error::RankDeficient { .. } | Error::Numerical(_) => {
                ErrorClass::Numerical
            }
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
