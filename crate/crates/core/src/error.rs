use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: index {index} out of range for dimension of size {bound}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("{op}: expected a scalar node, got shape {shape:?}")]
    NonScalarLoss { op: &'static str, shape: Vec<usize> },

    #[error("sample {position}: field `{field}` index {index} out of vocabulary bound {bound}")]
    SampleIndexOutOfRange {
        position: usize,
        field: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("prediction {value} at position {position} lies outside [0, 1]")]
    PredictionOutOfRange { position: usize, value: f64 },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("ingest aborted: {bad} of {total} rows malformed (> 1%); first errors:\n{sample}")]
    IngestAborted {
        bad: usize,
        total: usize,
        sample: String,
    },

    #[error("training diverged: non-finite loss at step {step} (epoch {epoch})")]
    Diverged { step: usize, epoch: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
