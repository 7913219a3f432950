use crate::lattice::LatticePoint;

/// Errors surfaced by the library. The CLI maps each variant to a distinct exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected d = {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("integer overflow in lattice arithmetic")]
    Overflow,

    #[error("{0}")]
    Usage(String),

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    /// A lazily evaluated quantity did not settle within its limit.
    /// `partial` carries the last value seen, if any.
    #[error("censored {what} at {position:?} after limit {limit} (partial value {partial:?})")]
    Censored {
        what: String,
        position: Option<LatticePoint>,
        limit: u64,
        partial: Option<u64>,
    },

    #[error("acceptance rate too low: {accepted} of {attempts} attempts (floor {floor})")]
    Acceptance {
        accepted: u64,
        attempts: u64,
        floor: f64,
    },

    #[error("resource limit: {0}")]
    Resource(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    /// Attach a position to a censored error that was raised without one.
    pub fn at(self, z: LatticePoint) -> Self {
        match self {
            Error::Censored {
                what,
                position: None,
                limit,
                partial,
            } => Error::Censored {
                what,
                position: Some(z),
                limit,
                partial,
            },
            other => other,
        }
    }
}
