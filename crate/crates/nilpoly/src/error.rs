use crate::nilgroup::GroupElement;

/// Library-wide error type. Variants map onto the CLI exit codes:
/// `Invalid` → 2, `CapExceeded` / `Precision` / `Inconclusive` → 3,
/// `NotNilpotent` → 3, `Internal` → 2. "Not found" outcomes are values,
/// not errors.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("resource cap exceeded: {0}")]
    CapExceeded(String),

    #[error("precision insufficient: {0}")]
    Precision(String),

    #[error("inconclusive within the search bound: {0}")]
    Inconclusive(String),

    /// The lower central series failed to reach the trivial group within the
    /// class cap. Carries the layers computed so far (generators of
    /// G_2, …, G_{cap+1}) so callers can inspect the obstruction.
    #[error("not nilpotent within class cap {cap}")]
    NotNilpotent {
        cap: u32,
        layers: Vec<Vec<GroupElement>>,
    },

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
