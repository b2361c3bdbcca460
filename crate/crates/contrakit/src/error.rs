use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("weight matrix is singular")]
    SingularWeight,

    #[error("weight matrix condition number {cond:.3e} exceeds cap {cap:.3e}")]
    IllConditionedWeight { cond: f64, cap: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown builtin model '{0}'")]
    UnknownModel(String),

    #[error("model '{model}' requires parameter '{param}'")]
    MissingParam { model: String, param: String },

    #[error(
        "noise has d = {d} non-commuting columns; only d = 1 or commutative \
         multi-d noise is supported (no Levy-area simulation)"
    )]
    NonCommutativeNoise { d: usize },

    #[error("trajectory blew up at step {step} (|x| > {threshold:.1e})")]
    BlowUp { step: usize, threshold: f64 },

    #[error("series has nonpositive values on the fit window; {0}")]
    NonpositiveSeries(String),

    #[error("{0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
