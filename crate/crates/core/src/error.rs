use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed landmark file: {0}")]
    Format(String),

    #[error("truncated data: expected {expected} frames, found {found} complete frames")]
    Truncation { expected: usize, found: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("annotation line {line}: frame order violated ({detail})")]
    AnnotationOrder { line: usize, detail: String },

    #[error("annotation line {line}: {detail}")]
    AnnotationSyntax { line: usize, detail: String },

    #[error("unknown label: {0}")]
    Label(String),

    #[error("frame range {start}..={end} exceeds stream of {len} frames")]
    Range {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("no frame in video {video} has both shoulder points")]
    Calibration { video: String },

    #[error("unsupported frame rate {0} (expected 15, 24 or 30)")]
    Fps(u8),

    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },

    #[error("invalid quantization scheme: {0}")]
    Scheme(String),

    #[error("template pool has no trial of class {0}")]
    ClassCoverage(String),

    #[error("training labels contain a single class")]
    DegenerateLabels,

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("configuration error for key `{key}`: {detail}")]
    Config { key: String, detail: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            detail: detail.into(),
        }
    }
}
