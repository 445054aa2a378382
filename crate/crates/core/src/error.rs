//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty cloud")]
    EmptyCloud,

    #[error("cloud attribute length mismatch: {attribute} has {got} entries, cloud has {expected} points")]
    AttributeLength {
        attribute: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid radius: {0}")]
    InvalidRadius(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("underdetermined: {0} correspondence pairs, need at least 3")]
    Underdetermined(usize),

    #[error("degenerate correspondence set")]
    DegenerateCorrespondences,

    #[error("no correspondences")]
    NoCorrespondences,

    #[error("icp failed at iteration {iteration}: {source}")]
    IcpIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("ply parse error at line {line}: {message}")]
    PlyParse { line: usize, message: String },

    #[error("unsupported coordinate type: {0}")]
    UnsupportedCoordinateType(String),

    #[error("unexpected end of data")]
    UnexpectedEndOfData,

    #[error("xyz parse error at line {line}: {message}")]
    XyzParse { line: usize, message: String },

    #[error("ground truth shape mismatch: {side} truth has {got} labels, cloud has {expected} points")]
    GroundTruthMismatch {
        side: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("degenerate shape: total surface area is zero")]
    DegenerateShape,

    #[error("defect {index} selects no points")]
    DefectSelectsNoPoints { index: usize },

    #[error("config error: {0}")]
    Config(String),

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
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
