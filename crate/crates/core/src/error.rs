use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index {index} out of range for {len} blocks")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported component: {0}")]
    UnsupportedComponent(String),

    #[error("staleness bound violated: component {component} has delay {delay} > {bound}")]
    Staleness {
        component: usize,
        delay: u64,
        bound: u64,
    },

    #[error("divergence at iteration {iteration}: dual value {value} (initial {initial})")]
    Divergence {
        iteration: u64,
        value: f64,
        initial: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("problem build failed: {0}")]
    Build(String),

    #[error("{path}: {message}")]
    Format { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
