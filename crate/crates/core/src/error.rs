use thiserror::Error;

/// Everything that can go wrong when configuring or running a simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// A structural problem in a config file: bad syntax, a missing key, an
    /// out-of-range value. Carries the 1-based line number when the problem
    /// is tied to a specific line (0 when it is not).
    #[error("config error (line {line}): {message}")]
    Config { line: usize, message: String },

    /// A key the config schema does not know about.
    #[error("unknown config key `{key}` (line {line})")]
    UnknownKey { key: String, line: usize },

    /// Vectors that were supposed to agree in length did not.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A parameter violated its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A dataset with no points where at least one is required.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// A malformed data or trace file.
    #[error("parse error in {path} (line {line}): {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// The brute-force oracle only scans 1-D and 2-D decision sets.
    #[error("unsupported dimension {0} (oracle handles 1 or 2)")]
    UnsupportedDimension(usize),

    /// A loss or update turned non-finite mid-run; the run is aborted
    /// rather than letting NaNs propagate silently into the trace.
    #[error("non-finite value at iteration {iteration}, agent {agent}")]
    NonFinite { iteration: usize, agent: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
