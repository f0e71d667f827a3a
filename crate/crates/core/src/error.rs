use thiserror::Error;

use crate::model::ContainerId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("limit sets cover different resource kinds")]
    MismatchedKinds,
    #[error("lower bound {lo} exceeds upper bound {hi}")]
    InvertedBounds { lo: u64, hi: u64 },
    #[error("invalid optimization policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid device address {0:?}")]
    InvalidDeviceId(String),
    #[error("{0} must not be empty")]
    EmptyIdentifier(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("action {action} may not be published on topic {topic}")]
    Protocol { action: String, topic: String },
    #[error("unknown topic {0:?}")]
    UnknownTopic(String),
    #[error("topic {0} requires cluster bridging")]
    BridgingDisabled(String),
    #[error("a device cannot bridge to itself")]
    SelfPeer,
    #[error("malformed wire message: {0}")]
    Wire(String),
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("{0} is not the owner of this image")]
    OwnershipViolation(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("content under {0} does not match its digest")]
    Tampered(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("unsupported store hash algorithm {0:?}")]
    UnsupportedAlgorithm(String),
    #[error("storage failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("encoding failure: {0}")]
    Encoding(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HostError {
    #[error("container {0} not found or not running")]
    NotFound(ContainerId),
    #[error("limits must be non-zero for both resources")]
    ZeroLimits,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ForecastError {
    #[error("cannot aggregate an empty series")]
    EmptySeries,
    #[error("series timestamps are not monotone")]
    NonMonotone,
    #[error("invalid forecast configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown built-in scenario {0:?}")]
    UnknownBuiltin(String),
    #[error("failed to parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
