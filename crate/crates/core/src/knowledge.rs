//! Per-device shared state read and written by the control-loop components.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bus::SignedLimits;
use crate::hostsim::{ContainerStatus, WorkloadSpec};
use crate::model::{ContainerId, DeviceId, ImageName, LimitRole, LimitSet, OwnerId, SimTime};
use crate::monitor::{MetricsSeries, RetryState};
use crate::registry::ContentHash;

/// A container started by the deployer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub container: ContainerId,
    pub request_id: String,
    pub owner: OwnerId,
    pub image: ImageName,
    pub image_hash: ContentHash,
    pub spec: WorkloadSpec,
    pub request: LimitSet,
    pub base: LimitSet,
    pub attempt: u32,
    pub role: LimitRole,
    pub limits: LimitSet,
    pub started_at: SimTime,
    pub status: ContainerStatus,
    /// Consecutive optimization cycles that left the limits unchanged.
    pub stable_cycles: u32,
}

impl Deployment {
    pub fn is_active(&self) -> bool {
        self.status == ContainerStatus::Running
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RequestStatus {
    Pending,
    Running { container: ContainerId, device: DeviceId },
    Rejected { reason: String },
    Failed { reason: String },
    Finished,
}

/// Availability of one device as last reported on the monitor topics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub unallocated: SignedLimits,
    pub avail: SignedLimits,
    pub updated_at: SimTime,
}

pub type AvailabilityTable = BTreeMap<DeviceId, TableEntry>;

#[derive(Debug, Clone, Default)]
pub struct Knowledge {
    pub series: BTreeMap<ContainerId, MetricsSeries>,
    /// Every deployment on this device in start order.
    pub deployments: Vec<Deployment>,
    pub requests: BTreeMap<String, RequestStatus>,
    pub retries: BTreeMap<String, RetryState>,
    pub table: AvailabilityTable,
    /// Accepted targets not yet started, keyed by `request/attempt`.
    pub reservations: BTreeMap<String, LimitSet>,
}

impl Knowledge {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn deployment(&self, id: &ContainerId) -> Option<&Deployment> {
        self.deployments.iter().find(|d| &d.container == id)
    }

    pub fn deployment_mut(&mut self, id: &ContainerId) -> Option<&mut Deployment> {
        self.deployments.iter_mut().find(|d| &d.container == id)
    }

    /// Running deployments, oldest first.
    pub fn active(&self) -> impl Iterator<Item = &Deployment> {
        self.deployments.iter().filter(|d| d.is_active())
    }

    pub fn reservation_key(request_id: &str, attempt: u32) -> String {
        format!("{request_id}/a{attempt}")
    }

    pub fn has_request(&self, request_id: &str) -> bool {
        self.deployments.iter().any(|d| d.request_id == request_id)
    }

    /// Largest memory usage observed for `id` at or after `since`.
    pub fn observed_mem_max(&self, id: &ContainerId, since: SimTime) -> Option<f64> {
        self.series.get(id).and_then(|s| {
            s.points()
                .iter()
                .filter(|p| p.t >= since)
                .map(|p| p.mem_peak)
                .reduce(f64::max)
        })
    }

    /// Most recent utilization of `id` as (cpu, mem).
    pub fn last_util(&self, id: &ContainerId) -> Option<(f64, f64)> {
        self.series
            .get(id)
            .and_then(|s| s.points().last())
            .map(|p| (p.cpu_util, p.mem_util))
    }
}
