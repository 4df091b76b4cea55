use alloc::string::String;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("split has no samples of class {label} in {split}")]
    MissingClass { split: &'static str, label: u8 },
    #[error("training diverged at {stage} epoch {epoch}: non-finite loss")]
    Diverged { stage: &'static str, epoch: usize },
    #[error("matrix not positive definite even with jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },
    #[error("standard error of the difference is zero; Z is undefined")]
    UndefinedZ,
    #[error("objective failed {0} consecutive times")]
    ObjectiveFailures(usize),
    #[error("empty {0}")]
    Empty(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
