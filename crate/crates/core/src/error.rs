use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("kernel evaluated at coincident points (|x - y| = 0)")]
    SingularPoint,
    #[error("point set is empty")]
    EmptyInput,
    #[error("point {index} at ({x}, {y}, {z}) lies outside the root box")]
    PointOutsideRoot { index: usize, x: f64, y: f64, z: f64 },
    #[error("invalid box: lower corner must be strictly below upper corner on every axis")]
    InvalidBox,
    #[error("degenerate interval [{a}, {b}]")]
    DegenerateInterval { a: f64, b: f64 },
    #[error("block midpoints coincide; no direction can be assigned")]
    CoincidentMidpoints,
    #[error("root boxes of target and source trees differ in side lengths")]
    IncompatibleRoots,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
