use alloc::string::String;

use crate::store::PrototypeId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("prototype store is at capacity ({capacity})")]
    CapacityExceeded { capacity: usize },
    #[error("invalid prototype: {0}")]
    InvariantViolation(String),
    #[error("unknown prototype id {0}")]
    UnknownId(PrototypeId),
    #[error("prototype store is empty")]
    EmptyStore,
    #[error("operation requires {expected} mode")]
    ModeMismatch { expected: &'static str },
    #[error("class {class} has no examples")]
    EmptyClass { class: usize },
    #[error("importance window is empty")]
    EmptyWindow,
    #[error("importance row step {step} precedes window step {current}")]
    NonMonotoneStep { step: u64, current: u64 },
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(&'static str),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("unknown example id {0}")]
    UnknownExample(u64),
    #[error("invalid config `{field}`: {reason}")]
    ConfigInvalid { field: &'static str, reason: String },
}
