use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("graph has no perfect matching")]
    NoPerfectMatching,
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("test guard: {0}")]
    TestGuard(String),
}

pub type Result<T> = std::result::Result<T, Error>;
