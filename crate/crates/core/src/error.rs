use thiserror::Error;

/// Errors raised by the estimation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ISRF has zero total response")]
    ZeroIsrf,
    #[error("ISRF contains a negative or non-finite value at sample {0}")]
    InvalidIsrfValue(usize),
    #[error("invalid spline knots: {0}")]
    InvalidKnots(String),
    #[error("wavelength {value} nm lies outside [{min}, {max}] nm")]
    OutOfDomain { value: f64, min: f64, max: f64 },
    #[error("extrapolation required: {0}")]
    ExtrapolationRequired(String),
    #[error("reference domain too small: {0}")]
    DomainTooSmall(String),
    #[error("index or window out of range: {0}")]
    OutOfRange(String),
    #[error("requested {requested} atoms but training matrix has rank bound {available}")]
    RankDeficient { requested: usize, available: usize },
    #[error("sparse code has an empty support")]
    NoSupport,
    #[error("cannot initialize parametric model: {0}")]
    DegenerateInit(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}:{line}: {msg}")]
    Format { path: String, line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
