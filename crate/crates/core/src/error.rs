use thiserror::Error;

use crate::geometry::Model;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("point ({x}, {y}) is not strictly inside the unit disk")]
    OutsideDisk { x: f64, y: f64 },
    #[error("point ({x}, {y}) is not in the upper half-plane")]
    OutsideHalfPlane { x: f64, y: f64 },
    #[error("expected a point of the {expected:?} model")]
    WrongModel { expected: Model },
    #[error("typicality onset {onset} exceeds the snapshot time {time}")]
    OnsetAfterHorizon { onset: f64, time: f64 },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ConfigError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { field, reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("particle {0} is not alive in this snapshot")]
    UnknownParticle(u128),
    #[error("lineage depth exceeds the 127 generations addressable by particle ids")]
    IdOverflow,
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("need at least {needed} scales, got {got}")]
    TooFewScales { needed: usize, got: usize },
    #[error("scales must span at least {needed} decades, got {got:.3}")]
    NarrowScaleRange { needed: f64, got: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("conditioning failed: all {0} runs were rejected")]
    ConditioningFailure(usize),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

impl From<ConfigError> for EstimateError {
    fn from(e: ConfigError) -> Self {
        EstimateError::Engine(EngineError::Config(e))
    }
}
