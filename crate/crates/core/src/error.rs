use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("integration diverged at step {step}")]
    Divergence { step: usize },

    #[error("attractor sampling for {system} diverged during the transient; try a smaller perturbation")]
    TransientDivergence { system: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown system {0:?}")]
    UnknownSystem(String),

    #[error("spectrum is empty (constant series)")]
    EmptySpectrum,

    #[error("alignment failed for {system}: no significant frequencies")]
    AlignmentFailure { system: String },

    #[error("refusing to upsample: target spacing {target} is finer than source spacing {source_spacing}")]
    UpsamplingRefused { source_spacing: f64, target: f64 },

    #[error("jacobian evaluation failed: {0}")]
    Jacobian(String),

    #[error("input spectrum is not sorted in descending order")]
    UnsortedSpectrum,

    #[error("correlation dimension undefined: only {usable} usable radii in the scaling region")]
    DimensionUndefined { usable: usize },

    #[error("model used before fit")]
    NotFitted,

    #[error("history too short: need {needed} points, got {got}")]
    HistoryTooShort { needed: usize, got: usize },

    #[error("singular normal equations")]
    Singular,

    #[error("hyperparameter {value} outside the grid for {kind}")]
    HyperOutOfGrid { kind: String, value: String },

    #[error("metric {metric} undefined: {reason}")]
    MetricUndefined { metric: String, reason: String },

    #[error("io: {0}")]
    Io(String),

    #[error("serialization: {0}")]
    Serde(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
