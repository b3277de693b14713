use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("tensor contains a non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("attention row {row} is fully masked")]
    FullyMasked { row: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("function is not deterministic: two evaluations gave {first} and {second}")]
    NonDeterministic { first: f64, second: f64 },

    #[error("invalid bounding box [{x_min}, {y_min}, {x_max}, {y_max}]")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },

    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Short stable category name, used by the CLI for machine-parsable errors.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::NonFinite { .. } => "non_finite",
            Error::FullyMasked { .. } => "masking",
            Error::Contract(_) => "contract",
            Error::NonDeterministic { .. } => "determinism",
            Error::InvalidBox { .. } => "invalid_box",
            Error::Parse { .. } | Error::Json(_) => "parse",
            Error::Data(_) => "data",
            Error::Config { .. } => "config",
            Error::Generation(_) => "generation",
            Error::NonFiniteLoss { .. } => "diverged",
            Error::Io(_) => "io",
        }
    }
}
