use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("waveform too short: {got_s:.2} s, need at least {need_s:.2} s")]
    TooShort { got_s: f64, need_s: f64 },
    #[error("degenerate point configuration: {0}")]
    Degenerate(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("too few frames: got {got}, need at least {need}")]
    TooFewFrames { got: usize, need: usize },
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },
    #[error("k = {k} folds requested for {n} recordings")]
    KTooLarge { k: usize, n: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("subject never in bed")]
    NeverInBed,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("recording {id}: {source}")]
    Recording {
        id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn in_recording(self, id: &str) -> Self {
        Error::Recording {
            id: id.to_string(),
            source: Box::new(self),
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    /// True when the root cause is a filesystem error rather than bad input.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Recording { source, .. } | Error::Stage { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
