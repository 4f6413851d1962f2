use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("bounding box does not intersect the grid")]
    EmptyIntersection,
    #[error("channel {channel} has zero standard deviation")]
    ZeroSigma { channel: usize },
    #[error("every patch of the view is masked")]
    AllPatchesMasked,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("dates are not strictly increasing")]
    UnorderedDates,
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("requested {requested} groups but only {available} distinct lag profiles")]
    TooManyGroups { requested: usize, available: usize },
}
