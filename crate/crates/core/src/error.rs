use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape in {op}: {detail}")]
    InvalidShape { op: &'static str, detail: String },

    #[error("degenerate input to {op}: {detail}")]
    DegenerateInput { op: &'static str, detail: String },

    #[error("invalid landmark count {landmarks} for {rows} rows")]
    InvalidLandmarks { landmarks: usize, rows: usize },

    #[error("convolution kernel size must be odd, got {0}")]
    EvenKernel(usize),

    #[error("bag of {instances} instances exceeds capacity of {capacity}")]
    Capacity { instances: usize, capacity: usize },

    #[error("bag has no instances")]
    EmptyBag,

    #[error("unknown task `{0}` (expected binary, multiclass or multilabel)")]
    UnknownTask(String),

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("target length {got} does not match {expected} labels")]
    TargetLength { expected: usize, got: usize },

    #[error("target does not match task {0}")]
    TargetKind(&'static str),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("document `{0}` has no tokens")]
    EmptyDocument(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidShape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
