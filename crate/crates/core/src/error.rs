use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("{excluded} of {total} paths were invalid (limit is 1%)")]
    TooManyInvalidPaths { excluded: usize, total: usize },

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    #[error("unresolved vorticity support: {0}")]
    UnresolvedSupport(String),

    #[error("unsupported drift: {0}")]
    UnsupportedDrift(String),

    #[error(
        "Picard iteration is not contracting at t = {time} (distance {previous:.3e} -> {current:.3e}); use a smaller time step"
    )]
    PicardDiverged {
        time: f64,
        previous: f64,
        current: f64,
    },

    #[error("indeterminate growth rate: {0}")]
    IndeterminateRate(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("grid file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
