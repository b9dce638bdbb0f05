use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounding box [{x_min}, {y_min}, {x_max}, {y_max}]: {reason}")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
        reason: &'static str,
    },

    #[error("duplicate (video_id, frame_idx, entity_id) rows: {}", .0.join("; "))]
    DuplicateAnnotations(Vec<String>),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing embedding for key `{0}`")]
    MissingKey(String),

    #[error("dimension mismatch: expected {expected}, found {found} (key `{key}`)")]
    DimensionMismatch {
        key: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in vector `{0}`")]
    NonFinite(String),

    #[error("zero vector at index {0}: cosine similarity is undefined")]
    ZeroVector(usize),

    #[error("assignment for video `{video_id}` does not cover its tracklets: {detail}")]
    Coverage { video_id: String, detail: String },

    #[error("cannot place {count} entity centers in {dim} dimensions at separation {sep}")]
    SeparationImpossible { count: usize, dim: usize, sep: f64 },

    #[error("split leakage: video `{video_id}` appears in both `{a}` and `{b}`")]
    SplitLeakage {
        video_id: String,
        a: String,
        b: String,
    },

    #[error("matrix is missing {0}; compute it before clustering")]
    MissingMatrix(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{0}")]
    Data(String),

    #[error("clustering did not converge for {} video(s): {}", .0.len(), .0.join(", "))]
    NotConverged(Vec<String>),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// `true` for errors caused by the run configuration rather than by the data.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::SplitLeakage { .. } | Error::Empty("sweep grid")
        )
    }
}
