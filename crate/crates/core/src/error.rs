use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),

    #[error("reflection undefined: input amplitude is zero")]
    UndefinedReflection,

    #[error("initial guess failed: {0}")]
    GuessFailure(String),

    #[error("crossing not bracketed by the map: {0}")]
    Bracketing(String),

    #[error("insufficient linear range: {0}")]
    InsufficientLinearRange(String),

    #[error("normalization failed: {0}")]
    Normalization(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
