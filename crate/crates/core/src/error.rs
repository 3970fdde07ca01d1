use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("box has non-finite coordinates {0:?}")]
    NonFinite([f64; 4]),
    #[error("box {0:?} has zero or negative extent")]
    Degenerate([f64; 4]),
    #[error("box delta has non-finite components {0:?}")]
    NonFiniteDelta([f64; 4]),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("configuration produces no anchors")]
    NoAnchors,
    #[error("infeasible scene configuration: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("loss evaluated to a non-finite value at {0}")]
    NonFinite(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("action index {index} out of range for {len} union actions")]
    ActionOutOfRange { index: usize, len: usize },
    #[error("action {0} requires a target object but none was given")]
    MissingObject(usize),
    #[error("score vector of length {got} does not match the expected {expected}")]
    ScoreLength { got: usize, expected: usize },
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-level error for call sites that mix subsystems.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
