use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("no positive pair can be formed: every identity has a single sample")]
    NoPositivePairs,

    #[error("no negative pair: all samples share one identity")]
    NoNegativePairs,

    #[error("identity {0} is on both sides of the split")]
    OverlappingSplit(i64),

    #[error("identity {0} does not occur in the labels")]
    UnknownIdentity(i64),

    #[error("identity {0} is assigned to neither side of the split")]
    UnassignedIdentity(i64),

    #[error("requested {requested} components but at most {max} are available")]
    TooManyComponents { requested: usize, max: usize },

    #[error("data has zero variance")]
    ZeroVariance,

    #[error("cannot form {k} clusters from {n} samples")]
    TooManyClusters { k: usize, n: usize },

    #[error("invalid value for `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("objective became non-finite at iteration {0}")]
    Diverged(usize),

    #[error("probe {probe} (identity {identity}) has no match in the gallery")]
    ProbeWithoutMatch { probe: usize, identity: i64 },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
