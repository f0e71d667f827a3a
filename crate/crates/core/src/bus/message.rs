use std::fmt;

use serde::{Deserialize, Serialize};

use super::Topic;
use crate::error::BusError;
use crate::hostsim::MetricsSample;
use crate::model::{ContainerId, DeviceId, ImageName, LimitRole, LimitSet, OwnerId, SimTime};

/// Orchestration actions carried in the `action` field of every message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    DeploymentRequest,
    DeploymentAnalysisRequest,
    DeploymentOptimizationRequest,
    ForecastRequest,
    ForecastResponse,
    DeploymentAccept,
    DeploymentCancel,
    DeploymentUpdate,
    MonitoringResult,
}

impl Action {
    pub const ALL: [Action; 9] = [
        Action::DeploymentRequest,
        Action::DeploymentAnalysisRequest,
        Action::DeploymentOptimizationRequest,
        Action::ForecastRequest,
        Action::ForecastResponse,
        Action::DeploymentAccept,
        Action::DeploymentCancel,
        Action::DeploymentUpdate,
        Action::MonitoringResult,
    ];

    /// The local topic an action travels on.
    pub fn topic(self) -> Topic {
        match self {
            Action::DeploymentRequest
            | Action::DeploymentAccept
            | Action::DeploymentCancel
            | Action::DeploymentUpdate => Topic::Deploy,
            Action::DeploymentAnalysisRequest | Action::DeploymentOptimizationRequest => {
                Topic::Analyze
            }
            Action::ForecastRequest | Action::ForecastResponse => Topic::Forecast,
            Action::MonitoringResult => Topic::Monitor,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::DeploymentRequest => "deployment_request",
            Action::DeploymentAnalysisRequest => "deployment_analysis_request",
            Action::DeploymentOptimizationRequest => "deployment_optimization_request",
            Action::ForecastRequest => "forecast_request",
            Action::ForecastResponse => "forecast_response",
            Action::DeploymentAccept => "deployment_accept",
            Action::DeploymentCancel => "deployment_cancel",
            Action::DeploymentUpdate => "deployment_update",
            Action::MonitoringResult => "monitoring_result",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a deployment request may be handled by any device in a cluster or
/// only by the device that produced it (monitor-driven retries).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Cluster,
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentRequest {
    pub request_id: String,
    pub owner: OwnerId,
    pub image: ImageName,
    pub requester: String,
    pub attempt: u32,
    pub target_role: LimitRole,
    /// Explicit target, set on monitor-driven retries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<LimitSet>,
    pub scope: Scope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRequest {
    pub request_id: String,
    pub owner: OwnerId,
    pub image: ImageName,
    pub attempt: u32,
    pub role: LimitRole,
    pub target: LimitSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizationRequest {
    pub cycle: u64,
    pub container: ContainerId,
    /// Number of optimization requests belonging to the same cycle.
    pub batch_size: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastRequest {
    pub containers: Vec<ContainerId>,
    pub horizon: usize,
}

/// Forecast series for one container, or the reason none could be produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerForecast {
    pub container: ContainerId,
    #[serde(flatten)]
    pub outcome: ForecastOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ForecastOutcome {
    Ok {
        cpu_util: Vec<f64>,
        mem_util: Vec<f64>,
        throttle: Vec<f64>,
        /// True when history was too short and the last value was repeated.
        fallback: bool,
    },
    Error {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResponse {
    pub results: Vec<ContainerForecast>,
}

/// Predicted availability per resource; may be negative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedLimits {
    pub cpu: i64,
    pub mem: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub request_id: String,
    pub attempt: u32,
    pub role: LimitRole,
    pub target: LimitSet,
    pub predicted_avail: SignedLimits,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimitUpdate {
    pub cycle: u64,
    pub container: ContainerId,
    pub previous: LimitSet,
    pub limits: LimitSet,
}

/// Typed message payloads; serialized as `{"action": ..., "payload": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", content = "payload", rename_all = "snake_case")]
pub enum Body {
    DeploymentRequest(DeploymentRequest),
    DeploymentAnalysisRequest(AnalysisRequest),
    DeploymentOptimizationRequest(OptimizationRequest),
    ForecastRequest(ForecastRequest),
    ForecastResponse(ForecastResponse),
    DeploymentAccept(Verdict),
    DeploymentCancel(Verdict),
    DeploymentUpdate(LimitUpdate),
    MonitoringResult(MetricsSample),
}

impl Body {
    pub fn action(&self) -> Action {
        match self {
            Body::DeploymentRequest(_) => Action::DeploymentRequest,
            Body::DeploymentAnalysisRequest(_) => Action::DeploymentAnalysisRequest,
            Body::DeploymentOptimizationRequest(_) => Action::DeploymentOptimizationRequest,
            Body::ForecastRequest(_) => Action::ForecastRequest,
            Body::ForecastResponse(_) => Action::ForecastResponse,
            Body::DeploymentAccept(_) => Action::DeploymentAccept,
            Body::DeploymentCancel(_) => Action::DeploymentCancel,
            Body::DeploymentUpdate(_) => Action::DeploymentUpdate,
            Body::MonitoringResult(_) => Action::MonitoringResult,
        }
    }
}

/// Envelope routed over the bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    /// Unique per logical message; bridged copies keep the id.
    pub id: String,
    pub origin: DeviceId,
    pub correlation_id: String,
    pub sent_at: SimTime,
    #[serde(flatten)]
    pub body: Body,
}

impl Message {
    pub fn action(&self) -> Action {
        self.body.action()
    }

    /// JSON document suitable for an MQTT payload.
    pub fn to_wire(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("message serialization is infallible")
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Message, BusError> {
        serde_json::from_slice(bytes).map_err(|e| BusError::Wire(e.to_string()))
    }
}
