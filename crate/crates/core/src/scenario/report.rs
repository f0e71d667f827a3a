use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bus::{Action, Publication, Topic};
use crate::error::ScenarioError;
use crate::events::{Event, EventKind, EventLog};
use crate::hostsim::{ContainerStatus, WorkloadSpec};
use crate::knowledge::RequestStatus;
use crate::model::{ContainerId, DeviceId, ImageName, LimitSet, OwnerId, ResourceAmount, SimTime};

use super::expect::ExpectationResult;

pub const CSV_HEADER: &str = "t,container,cpu_util,cpu_limit,cpu_throttle,mem_util,mem_limit,status";

/// One scraped container window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: SimTime,
    pub device: DeviceId,
    pub container: ContainerId,
    pub cpu_util: f64,
    pub cpu_limit: ResourceAmount,
    pub cpu_throttle: f64,
    pub mem_util: f64,
    pub mem_limit: ResourceAmount,
    pub status: ContainerStatus,
    pub backlog: u64,
}

impl TraceRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:.3},{},{:.3},{:.3},{},{}",
            self.t,
            self.container,
            self.cpu_util,
            self.cpu_limit,
            self.cpu_throttle,
            self.mem_util,
            self.mem_limit,
            self.status
        )
    }
}

/// An external deployment request and where it entered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestInfo {
    pub request_id: String,
    pub at: SimTime,
    pub device: DeviceId,
    pub owner: OwnerId,
    pub image: ImageName,
}

/// A container started during the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerInfo {
    pub container: ContainerId,
    pub request_id: String,
    pub image: ImageName,
    pub device: DeviceId,
    pub attempt: u32,
    pub started_at: SimTime,
    pub initial_limits: LimitSet,
    pub spec: WorkloadSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub duration: SimTime,
    pub devices: Vec<DeviceId>,
    pub requests: Vec<RequestInfo>,
    pub events: Vec<Event>,
    pub traces: Vec<TraceRow>,
    pub containers: Vec<ContainerInfo>,
    pub publications: BTreeMap<DeviceId, Vec<Publication>>,
    pub statuses: BTreeMap<String, RequestStatus>,
    pub peaks: BTreeMap<ImageName, ResourceAmount>,
    pub optimization_interval: SimTime,
    pub expectations: Vec<ExpectationResult>,
}

/// Admission decision as listed in the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSummary {
    pub t: SimTime,
    pub device: DeviceId,
    pub request_id: String,
    pub image: ImageName,
    pub attempt: u32,
    pub role: crate::model::LimitRole,
    pub target: LimitSet,
    pub predicted_avail: crate::bus::SignedLimits,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub passed: bool,
    pub decisions: Vec<DecisionSummary>,
    pub executors: Vec<(String, DeviceId)>,
    pub oom_kills: usize,
    pub expectations: Vec<ExpectationResult>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.expectations.iter().all(|e| e.passed)
    }

    pub fn event_log(&self) -> EventLog {
        let mut log = EventLog::new();
        for e in &self.events {
            log.push(e.t, e.device, e.kind.clone());
        }
        log
    }

    pub fn decisions(&self) -> Vec<DecisionSummary> {
        self.events
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::Admission {
                    request_id,
                    image,
                    attempt,
                    role,
                    target,
                    predicted_avail,
                    accepted,
                } => Some(DecisionSummary {
                    t: e.t,
                    device: e.device,
                    request_id: request_id.clone(),
                    image: image.clone(),
                    attempt: *attempt,
                    role: *role,
                    target: *target,
                    predicted_avail: *predicted_avail,
                    accepted: *accepted,
                }),
                _ => None,
            })
            .collect()
    }

    /// Device that first deployed each external request, in request order.
    pub fn executors(&self) -> Vec<(String, DeviceId)> {
        self.requests
            .iter()
            .filter_map(|r| {
                self.events.iter().find_map(|e| match &e.kind {
                    EventKind::Deployed { request_id, .. } if request_id == &r.request_id => {
                        Some((r.request_id.clone(), e.device))
                    }
                    _ => None,
                })
            })
            .collect()
    }

    pub fn oom_kills(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::OomKilled { .. }))
            .count()
    }

    /// Distinct `(topic, message id)` pairs seen cluster-wide per
    /// correlation id, for the given actions.
    pub fn message_count(&self, correlation_id: &str, actions: &[Action]) -> usize {
        let mut seen = std::collections::BTreeSet::<(Topic, String)>::new();
        for pubs in self.publications.values() {
            for p in pubs {
                if p.correlation_id == correlation_id && actions.contains(&p.action) {
                    seen.insert((p.topic, p.message_id.clone()));
                }
            }
        }
        seen.len()
    }

    pub fn summary(&self) -> Summary {
        Summary {
            scenario: self.scenario.clone(),
            seed: self.seed,
            passed: self.passed(),
            decisions: self.decisions(),
            executors: self.executors(),
            oom_kills: self.oom_kills(),
            expectations: self.expectations.clone(),
        }
    }

    pub fn rows<'a>(&'a self, id: &'a ContainerId) -> impl Iterator<Item = &'a TraceRow> + 'a {
        self.traces.iter().filter(move |r| &r.container == id)
    }

    /// The last container started for each request, in request order.
    pub fn final_containers(&self) -> Vec<&ContainerInfo> {
        self.requests
            .iter()
            .filter_map(|r| self.containers.iter().rev().find(|c| c.request_id == r.request_id))
            .collect()
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.traces.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.traces {
            let _ = writeln!(out, "{}", r.csv_line());
        }
        out
    }

    /// Per-container CSV documents keyed by container id.
    pub fn container_csvs(&self) -> BTreeMap<ContainerId, String> {
        let mut map: BTreeMap<ContainerId, String> = BTreeMap::new();
        for r in &self.traces {
            let doc = map
                .entry(r.container.clone())
                .or_insert_with(|| format!("{CSV_HEADER}\n"));
            let _ = writeln!(doc, "{}", r.csv_line());
        }
        map
    }
}

/// Writes `metrics.csv`, `containers/<id>.csv`, `events.jsonl` and
/// `summary.json` under `outdir`. Returns the written paths.
pub fn emit_traces(report: &RunReport, outdir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    let dir = outdir.join("containers");
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    let mut write = |path: PathBuf, text: &str| -> Result<(), ScenarioError> {
        fs::write(&path, text)?;
        written.push(path);
        Ok(())
    };
    write(outdir.join("metrics.csv"), &report.metrics_csv())?;
    for (id, doc) in report.container_csvs() {
        write(dir.join(format!("{id}.csv")), &doc)?;
    }
    write(outdir.join("events.jsonl"), &report.event_log().to_jsonl())?;
    let summary = serde_json::to_string_pretty(&report.summary())?;
    write(outdir.join("summary.json"), &summary)?;
    Ok(written)
}
