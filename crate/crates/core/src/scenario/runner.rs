//! Discrete-time driver wiring devices, buses and the registry together.

use std::collections::BTreeMap;

use crate::bus::{Body, DeploymentRequest, Scope, Topic};
use crate::device::{pump_all, Device};
use crate::error::ScenarioError;
use crate::events::{EventKind, EventLog};
use crate::knowledge::RequestStatus;
use crate::model::{DeviceId, ImageName, LimitRole, OwnerId, SimTime};
use crate::registry::{ImageBlob, Registry};

use super::config::{ScenarioConfig, ScheduleEntry};
use super::expect::evaluate_all;
use super::report::{ContainerInfo, RequestInfo, RunReport, TraceRow};

/// Stable per-image seed derived from the scenario seed.
pub fn image_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct Simulation {
    config: ScenarioConfig,
    registry: Registry,
    devices: Vec<Device>,
    log: EventLog,
    traces: Vec<TraceRow>,
    requests: Vec<RequestInfo>,
    schedule: Vec<ScheduleEntry>,
    now: SimTime,
    next_request: u64,
}

impl Simulation {
    /// Publishes the scenario's images and builds its devices.
    pub fn new(config: ScenarioConfig, registry: Registry) -> Result<Self, ScenarioError> {
        config.validate()?;
        for (i, img) in config.images.iter().enumerate() {
            let spec = img.spec(config.workload_period, image_seed(config.seed, i));
            let blob = ImageBlob {
                layers: vec![serde_json::to_vec(&spec)?],
            };
            registry.publish_image(&img.owner, &img.owner, &img.name, &blob, img.limits)?;
        }
        let clustered = config.clustered();
        let forecast = config.effective_forecast();
        let mut devices = Vec::with_capacity(config.devices.len());
        for d in &config.devices {
            let device = Device::new(
                d.id,
                d.host.clone(),
                config.policy.clone(),
                config.monitor,
                forecast,
                clustered,
            )
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            devices.push(device);
        }
        if clustered {
            let buses: Vec<_> = devices.iter().map(|d| d.bus.clone()).collect();
            for (i, bus) in buses.iter().enumerate() {
                let peers: Vec<_> = buses
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, b)| b.clone())
                    .collect();
                bus.bridge(&peers, &[Topic::Deploy, Topic::Monitor])
                    .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            }
        }
        let mut schedule = config.schedule.clone();
        // Fixed-time entries in time order; stable-triggered ones keep their
        // relative order after them.
        schedule.sort_by_key(|s| (s.after_stable, s.at.unwrap_or(0)));
        Ok(Simulation {
            config,
            registry,
            devices,
            log: EventLog::new(),
            traces: Vec::new(),
            requests: Vec::new(),
            schedule,
            now: 0,
            next_request: 0,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn is_finished(&self) -> bool {
        self.now >= self.config.duration
    }

    fn device_index(&self, device: Option<DeviceId>) -> Result<usize, ScenarioError> {
        match device {
            None => Ok(0),
            Some(id) => self
                .devices
                .iter()
                .position(|d| d.id() == id)
                .ok_or_else(|| ScenarioError::Invalid(format!("unknown device {id}"))),
        }
    }

    /// Hands an external deployment request to `device` (the first device
    /// when `None`) and returns its request id.
    pub fn submit(&mut self, device: Option<DeviceId>, owner: OwnerId, image: ImageName) -> Result<String, ScenarioError> {
        let idx = self.device_index(device)?;
        self.next_request += 1;
        let request_id = format!("r{}", self.next_request);
        let dev = &self.devices[idx];
        let id = dev.id();
        self.log.push(
            self.now,
            id,
            EventKind::Requested {
                request_id: request_id.clone(),
                owner: owner.clone(),
                image: image.clone(),
            },
        );
        self.requests.push(RequestInfo {
            request_id: request_id.clone(),
            at: self.now,
            device: id,
            owner: owner.clone(),
            image: image.clone(),
        });
        dev.bus.send(
            Body::DeploymentRequest(DeploymentRequest {
                request_id: request_id.clone(),
                owner,
                image,
                requester: "external".into(),
                attempt: 1,
                target_role: LimitRole::Request,
                target: None,
                scope: Scope::Cluster,
            }),
            request_id.clone(),
        );
        self.pump();
        Ok(request_id)
    }

    /// Status of a request as known to the device that handled it.
    pub fn status(&self, request_id: &str) -> Option<RequestStatus> {
        if !self.requests.iter().any(|r| r.request_id == request_id) {
            return None;
        }
        let known = self
            .devices
            .iter()
            .filter_map(|d| d.knowledge.requests.get(request_id))
            .max_by_key(|s| !matches!(s, RequestStatus::Pending));
        Some(known.cloned().unwrap_or(RequestStatus::Pending))
    }

    fn pump(&mut self) {
        pump_all(&mut self.devices, &self.registry, &mut self.log);
    }

    fn all_stable(&self) -> bool {
        let mut any = false;
        for d in &self.devices {
            for dep in d.knowledge.active() {
                any = true;
                if dep.stable_cycles < 2 {
                    return false;
                }
            }
        }
        any
    }

    fn submit_due(&mut self) -> Result<(), ScenarioError> {
        let t = self.now;
        let stable = self.all_stable();
        let mut i = 0;
        while i < self.schedule.len() {
            let s = &self.schedule[i];
            let due = match s.at {
                Some(at) => at <= t,
                None => s.after_stable && stable,
            };
            if due {
                let s = self.schedule.remove(i);
                self.submit(s.device, s.owner, s.image)?;
            } else {
                i += 1;
            }
        }
        Ok(())
    }

    /// Advances the simulation by one second.
    pub fn step(&mut self) -> Result<(), ScenarioError> {
        let t = self.now;
        for d in &self.devices {
            d.bus.set_clock(t);
        }
        let registry = &self.registry;
        if t.is_multiple_of(self.config.monitor.scrape_interval) {
            for d in self.devices.iter_mut() {
                let sample = d.with_monitor(registry, &mut self.log, |m, ctx| m.scrape_and_publish(ctx));
                self.traces.extend(sample.containers.iter().map(|c| TraceRow {
                    t: sample.timestamp,
                    device: sample.device,
                    container: c.container.clone(),
                    cpu_util: c.cpu_util,
                    cpu_limit: c.cpu_limit,
                    cpu_throttle: c.cpu_throttle,
                    mem_util: c.mem_util,
                    mem_limit: c.mem_limit,
                    status: c.status,
                    backlog: c.backlog,
                }));
            }
            self.pump();
        }
        let interval = self.config.policy.optimization_interval;
        if t > 0 && t.is_multiple_of(interval) {
            for d in self.devices.iter_mut() {
                d.with_monitor(&self.registry, &mut self.log, |m, ctx| {
                    m.enforce_retention(ctx);
                    m.schedule_optimization(ctx);
                });
            }
            self.pump();
        }
        self.submit_due()?;
        for d in self.devices.iter_mut() {
            d.tick(&self.registry, &mut self.log);
        }
        self.pump();
        self.now += 1;
        Ok(())
    }

    pub fn run_until(&mut self, end: SimTime) -> Result<(), ScenarioError> {
        while self.now < end.min(self.config.duration) {
            self.step()?;
        }
        Ok(())
    }

    /// Runs to the configured duration and evaluates the expectations.
    pub fn run(mut self) -> Result<RunReport, ScenarioError> {
        self.run_until(self.config.duration)?;
        Ok(self.finish())
    }

    /// Builds the report for the run so far.
    pub fn report(&self) -> RunReport {
        let mut containers = Vec::new();
        for e in self.log.events() {
            if let EventKind::Deployed {
                request_id,
                container,
                image,
                attempt,
                limits,
            } = &e.kind
            {
                let Some(dep) = self
                    .devices
                    .iter()
                    .find(|d| d.id() == e.device)
                    .and_then(|d| d.knowledge.deployment(container))
                else {
                    continue;
                };
                containers.push(ContainerInfo {
                    container: container.clone(),
                    request_id: request_id.clone(),
                    image: image.clone(),
                    device: e.device,
                    attempt: *attempt,
                    started_at: e.t,
                    initial_limits: *limits,
                    spec: dep.spec.clone(),
                });
            }
        }
        let statuses = self
            .requests
            .iter()
            .filter_map(|r| self.status(&r.request_id).map(|s| (r.request_id.clone(), s)))
            .collect();
        let peaks = self
            .config
            .images
            .iter()
            .map(|i| (i.name.clone(), i.spec(self.config.workload_period, 0).peak))
            .collect();
        let publications: BTreeMap<_, _> = self.devices.iter().map(|d| (d.id(), d.bus.publications())).collect();
        let mut report = RunReport {
            scenario: self.config.name.clone(),
            seed: self.config.seed,
            duration: self.now,
            devices: self.devices.iter().map(|d| d.id()).collect(),
            requests: self.requests.clone(),
            events: self.log.events().to_vec(),
            traces: self.traces.clone(),
            containers,
            publications,
            statuses,
            peaks,
            optimization_interval: self.config.policy.optimization_interval,
            expectations: Vec::new(),
        };
        report.expectations = evaluate_all(&report, &self.config);
        report
    }

    fn finish(self) -> RunReport {
        self.report()
    }
}

/// Runs `config` against a fresh in-memory registry.
pub fn run(config: ScenarioConfig) -> Result<RunReport, ScenarioError> {
    Simulation::new(config, Registry::in_memory())?.run()
}
