use thiserror::Error;

/// Errors raised anywhere in the routing / evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate image id `{0}`")]
    DuplicateId(String),

    #[error("image `{0}`: face box has zero area after clamping to the image extent")]
    ZeroAreaBox(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("no detections stored for image `{0}`")]
    MissingImage(String),

    #[error("score table `{table}` has no entry for image `{id}`")]
    MissingScore { table: String, id: String },

    #[error("unknown score table `{0}`")]
    UnknownTable(String),

    #[error("detector output for image `{0}` which is not in the dataset")]
    UnknownImage(String),

    #[error("cannot calibrate a threshold over an empty value list")]
    EmptyValues,

    #[error("metric undefined: dataset has no ground-truth faces")]
    NoGroundTruth,

    #[error("could not place {faces} faces in image `{image}` after {attempts} attempts")]
    InfeasiblePlacement { image: String, faces: usize, attempts: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse { line, message: message.into() }
    }

    /// Process exit code for the CLI: 2 for input/format problems, 3 for
    /// configuration problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnknownTable(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
