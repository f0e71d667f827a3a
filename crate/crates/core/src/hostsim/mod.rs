//! Discrete-time simulation of a single host and its container runtime.
//!
//! Every tick each running container demands CPU (pattern plus deferred
//! backlog) and memory. CPU is granted up to the container limit and then
//! shared max-min fairly when the host is saturated; ungranted work becomes
//! backlog and the tick counts as throttled. Memory above the container limit
//! kills the container. Metrics are accumulated per sampling window and reset
//! by [`HostSim::sample_metrics`].

pub mod workload;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use workload::{Pattern, Workload, WorkloadClass, WorkloadSpec, workload};

use crate::bus::SignedLimits;
use crate::error::HostError;
use crate::model::{ContainerId, DeviceId, LimitSet, ResourceAmount, SimTime};

fn default_tick() -> SimTime {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostConfig {
    pub total: LimitSet,
    /// Inert pre-existing allocation that is never available to containers.
    #[serde(default)]
    pub reserved: LimitSet,
    #[serde(default = "default_tick")]
    pub tick: SimTime,
}

impl Default for HostConfig {
    fn default() -> Self {
        HostConfig {
            total: LimitSet::new(1000, 1000),
            reserved: LimitSet::ZERO,
            tick: 1,
        }
    }
}

impl HostConfig {
    /// Capacity left for containers.
    pub fn usable(&self) -> LimitSet {
        LimitSet {
            cpu: self.total.cpu.saturating_sub(self.reserved.cpu),
            mem: self.total.mem.saturating_sub(self.reserved.mem),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerStatus {
    Running,
    KilledOom,
    Stopped,
}

impl ContainerStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ContainerStatus::Running => "running",
            ContainerStatus::KilledOom => "killed_oom",
            ContainerStatus::Stopped => "stopped",
        }
    }
}

impl fmt::Display for ContainerStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default)]
struct Window {
    ticks: u64,
    cpu_granted: u64,
    mem_used: u64,
    mem_peak: u64,
    throttled: u64,
}

#[derive(Debug, Clone)]
pub struct ContainerState {
    pub id: ContainerId,
    pub label: String,
    pub spec: WorkloadSpec,
    pub limits: LimitSet,
    pub status: ContainerStatus,
    /// CPU work (mCPU x ticks) deferred by throttling.
    pub backlog: u64,
    pub restart_count: u32,
    pub started_at: SimTime,
    /// Total CPU work demanded by the pattern since start.
    pub demanded_work: u64,
    /// Total CPU work granted since start.
    pub granted_work: u64,
    /// Memory demand at the moment of an OOM kill.
    pub last_mem_demand: ResourceAmount,
    workload: Workload,
    pending_limits: Option<LimitSet>,
    window: Window,
}

impl ContainerState {
    fn age(&self, now: SimTime) -> SimTime {
        now.saturating_sub(self.started_at)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HostEventKind {
    /// Demand exceeded the container's memory limit.
    OomKill { demand: ResourceAmount, limit: ResourceAmount },
    /// Host memory was exhausted; the newest container was killed.
    HostOom { demand: ResourceAmount },
    /// A finite workload completed.
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostEvent {
    pub t: SimTime,
    pub container: ContainerId,
    pub kind: HostEventKind,
}

impl HostEvent {
    /// True for exits that the monitor should retry.
    pub fn is_premature(&self) -> bool {
        !matches!(self.kind, HostEventKind::Stopped)
    }
}

/// Window statistics of one container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerSample {
    pub container: ContainerId,
    pub label: String,
    /// Mean granted CPU over the window, mCPU.
    pub cpu_util: f64,
    pub cpu_limit: ResourceAmount,
    /// Share of ticks in the window with ungranted demand, percent.
    pub cpu_throttle: f64,
    /// Mean memory usage over the window, MB.
    pub mem_util: f64,
    /// Maximum memory usage over the window, MB.
    pub mem_peak: f64,
    pub mem_limit: ResourceAmount,
    pub status: ContainerStatus,
    pub backlog: u64,
}

/// A host snapshot covering one sampling window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSample {
    pub device: DeviceId,
    /// Start of the window covered by the sample.
    pub timestamp: SimTime,
    pub total: LimitSet,
    pub containers: Vec<ContainerSample>,
    /// Capacity minus reserved capacity minus utilization of running containers.
    pub avail: SignedLimits,
    /// Capacity minus reserved capacity minus limits of running containers.
    pub unallocated: SignedLimits,
}

impl MetricsSample {
    pub fn empty(device: DeviceId, timestamp: SimTime) -> Self {
        MetricsSample {
            device,
            timestamp,
            total: LimitSet::ZERO,
            containers: Vec::new(),
            avail: SignedLimits::default(),
            unallocated: SignedLimits::default(),
        }
    }

    pub fn container(&self, id: &ContainerId) -> Option<&ContainerSample> {
        self.containers.iter().find(|c| &c.container == id)
    }
}

#[derive(Debug, Clone)]
pub struct HostSim {
    device: DeviceId,
    config: HostConfig,
    now: SimTime,
    window_start: SimTime,
    containers: Vec<ContainerState>,
    retired: Vec<ContainerState>,
}

fn to_i64(v: u64) -> i64 {
    i64::try_from(v).unwrap_or(i64::MAX)
}

impl HostSim {
    pub fn new(device: DeviceId, config: HostConfig) -> Self {
        HostSim {
            device,
            config,
            now: 0,
            window_start: 0,
            containers: Vec::new(),
            retired: Vec::new(),
        }
    }

    pub fn device(&self) -> DeviceId {
        self.device
    }

    pub fn config(&self) -> &HostConfig {
        &self.config
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Moves the clock without ticking; used to align a fresh host.
    pub fn set_now(&mut self, now: SimTime) {
        self.now = now;
        self.window_start = now;
    }

    /// Starts a container at phase 0 of its workload.
    pub fn run_container(
        &mut self,
        id: ContainerId,
        label: impl Into<String>,
        spec: WorkloadSpec,
        limits: LimitSet,
        restart_count: u32,
    ) -> Result<ContainerId, HostError> {
        if !limits.is_nonzero() {
            return Err(HostError::ZeroLimits);
        }
        let workload = Workload::new(spec.clone());
        self.containers.push(ContainerState {
            id: id.clone(),
            label: label.into(),
            spec,
            limits,
            status: ContainerStatus::Running,
            backlog: 0,
            restart_count,
            started_at: self.now,
            demanded_work: 0,
            granted_work: 0,
            last_mem_demand: ResourceAmount::ZERO,
            workload,
            pending_limits: None,
            window: Window::default(),
        });
        Ok(id)
    }

    /// Schedules new limits; they apply from the next tick.
    pub fn update_limits(&mut self, id: &ContainerId, limits: LimitSet) -> Result<(), HostError> {
        if !limits.is_nonzero() {
            return Err(HostError::ZeroLimits);
        }
        let c = self
            .containers
            .iter_mut()
            .find(|c| &c.id == id && c.status == ContainerStatus::Running)
            .ok_or_else(|| HostError::NotFound(id.clone()))?;
        c.pending_limits = Some(limits);
        Ok(())
    }

    pub fn container(&self, id: &ContainerId) -> Option<&ContainerState> {
        self.containers
            .iter()
            .chain(self.retired.iter())
            .find(|c| &c.id == id)
    }

    /// Running containers in start order.
    pub fn running(&self) -> impl Iterator<Item = &ContainerState> {
        self.containers
            .iter()
            .filter(|c| c.status == ContainerStatus::Running)
    }

    /// Every container ever started, running ones first.
    pub fn all_containers(&self) -> impl Iterator<Item = &ContainerState> {
        self.containers.iter().chain(self.retired.iter())
    }

    /// Sum of limits of running containers.
    pub fn allocated(&self) -> LimitSet {
        self.running().fold(LimitSet::ZERO, |acc, c| LimitSet {
            cpu: ResourceAmount(acc.cpu.0 + c.limits.cpu.0),
            mem: ResourceAmount(acc.mem.0 + c.limits.mem.0),
        })
    }

    /// Advances the simulation by one tick.
    pub fn tick(&mut self) -> Vec<HostEvent> {
        let now = self.now;
        let usable = self.config.usable();
        let mut events = Vec::new();

        for c in self.containers.iter_mut() {
            if c.status == ContainerStatus::Running {
                if let Some(l) = c.pending_limits.take() {
                    c.limits = l;
                }
            }
        }

        // Demands and memory checks.
        let mut wants: Vec<(usize, u64, u64)> = Vec::new();
        for (i, c) in self.containers.iter_mut().enumerate() {
            if c.status != ContainerStatus::Running {
                continue;
            }
            let age = c.age(now);
            if c.workload.finished(age) {
                c.status = ContainerStatus::Stopped;
                events.push(HostEvent {
                    t: now,
                    container: c.id.clone(),
                    kind: HostEventKind::Stopped,
                });
                continue;
            }
            let demand = c.workload.demand(age);
            if demand.mem > c.limits.mem {
                c.status = ContainerStatus::KilledOom;
                c.last_mem_demand = demand.mem;
                events.push(HostEvent {
                    t: now,
                    container: c.id.clone(),
                    kind: HostEventKind::OomKill {
                        demand: demand.mem,
                        limit: c.limits.mem,
                    },
                });
                continue;
            }
            let want = demand.cpu.0 + c.backlog;
            c.demanded_work += demand.cpu.0;
            wants.push((i, want, demand.mem.0));
        }

        // Host memory exhaustion kills the newest containers first.
        let mut mem_total: u64 = wants.iter().map(|w| w.2).sum();
        while mem_total > usable.mem.0 {
            let (i, want, mem) = wants.pop().expect("non-empty while over capacity");
            let c = &mut self.containers[i];
            c.status = ContainerStatus::KilledOom;
            c.last_mem_demand = ResourceAmount(mem);
            c.demanded_work -= want - c.backlog;
            events.push(HostEvent {
                t: now,
                container: c.id.clone(),
                kind: HostEventKind::HostOom {
                    demand: ResourceAmount(mem),
                },
            });
            mem_total -= mem;
        }

        // CPU: cap at the limit, then max-min fair share of the host.
        let caps: Vec<u64> = wants
            .iter()
            .map(|&(i, want, _)| want.min(self.containers[i].limits.cpu.0))
            .collect();
        let granted = fair_share(&caps, usable.cpu.0);

        for (k, &(i, want, mem)) in wants.iter().enumerate() {
            let c = &mut self.containers[i];
            let g = granted[k];
            c.backlog = want - g;
            c.granted_work += g;
            c.window.ticks += 1;
            c.window.cpu_granted += g;
            c.window.mem_used += mem;
            c.window.mem_peak = c.window.mem_peak.max(mem);
            if want > g {
                c.window.throttled += 1;
            }
        }

        self.now += self.config.tick.max(1);
        events
    }

    /// Window statistics since the previous call; dead containers are
    /// reported once and then retired.
    pub fn sample_metrics(&mut self) -> MetricsSample {
        let usable = self.config.usable();
        let mut containers = Vec::new();
        let mut util_cpu = 0.0;
        let mut util_mem = 0.0;
        for c in self.containers.iter_mut() {
            let w = std::mem::take(&mut c.window);
            if w.ticks == 0 && c.status == ContainerStatus::Running {
                continue;
            }
            let n = w.ticks.max(1) as f64;
            let s = ContainerSample {
                container: c.id.clone(),
                label: c.label.clone(),
                cpu_util: w.cpu_granted as f64 / n,
                cpu_limit: c.limits.cpu,
                cpu_throttle: 100.0 * w.throttled as f64 / n,
                mem_util: w.mem_used as f64 / n,
                mem_peak: w.mem_peak as f64,
                mem_limit: c.limits.mem,
                status: c.status,
                backlog: c.backlog,
            };
            if c.status == ContainerStatus::Running {
                util_cpu += s.cpu_util;
                util_mem += s.mem_util;
            }
            containers.push(s);
        }
        let (alive, dead): (Vec<_>, Vec<_>) = std::mem::take(&mut self.containers)
            .into_iter()
            .partition(|c| c.status == ContainerStatus::Running);
        self.containers = alive;
        self.retired.extend(dead);

        let alloc = self.allocated();
        let sample = MetricsSample {
            device: self.device,
            timestamp: self.window_start,
            total: self.config.total,
            containers,
            avail: SignedLimits {
                cpu: to_i64(usable.cpu.0) - util_cpu.ceil() as i64,
                mem: to_i64(usable.mem.0) - util_mem.ceil() as i64,
            },
            unallocated: SignedLimits {
                cpu: to_i64(usable.cpu.0) - to_i64(alloc.cpu.0),
                mem: to_i64(usable.mem.0) - to_i64(alloc.mem.0),
            },
        };
        self.window_start = self.now;
        sample
    }
}

/// Max-min fair allocation of `capacity` among demands `caps`.
fn fair_share(caps: &[u64], capacity: u64) -> Vec<u64> {
    let total: u64 = caps.iter().sum();
    if total <= capacity {
        return caps.to_vec();
    }
    let mut order: Vec<usize> = (0..caps.len()).collect();
    order.sort_by_key(|&i| (caps[i], i));
    let mut out = vec![0; caps.len()];
    let mut remaining = capacity;
    for (k, &i) in order.iter().enumerate() {
        let left = (caps.len() - k) as u64;
        let g = caps[i].min(remaining / left);
        out[i] = g;
        remaining -= g;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const P: SimTime = 300;

    fn dev() -> DeviceId {
        DeviceId::new(10, 0, 0, 1)
    }

    fn cid(s: &str) -> ContainerId {
        ContainerId::new(s).unwrap()
    }

    fn spec(p: Pattern, class: WorkloadClass) -> WorkloadSpec {
        WorkloadSpec::standard(p, class, P)
    }

    fn flat_cpu(level: u64) -> WorkloadSpec {
        // On-off with its peak at `level` for the first half of the period.
        let mut s = spec(Pattern::OnOff, WorkloadClass::CpuDominant);
        s.peak = ResourceAmount(level);
        s.period = 1_000_000;
        s
    }

    fn host() -> HostSim {
        HostSim::new(dev(), HostConfig::default())
    }

    fn run_ticks(h: &mut HostSim, n: u64) -> Vec<HostEvent> {
        (0..n).flat_map(|_| h.tick()).collect()
    }

    #[test]
    fn demand_above_cpu_limit_is_fully_throttled() {
        let mut h = host();
        h.run_container(cid("a"), "a", flat_cpu(150), LimitSet::new(100, 64), 0)
            .unwrap();
        run_ticks(&mut h, 10);
        let s = h.sample_metrics();
        let c = &s.containers[0];
        assert_eq!(c.cpu_throttle, 100.0);
        assert_eq!(c.cpu_util, 100.0);
        assert_eq!(c.backlog, 500);
    }

    #[test]
    fn demand_below_limit_is_not_throttled() {
        let mut h = host();
        h.run_container(cid("a"), "a", flat_cpu(80), LimitSet::new(100, 64), 0)
            .unwrap();
        run_ticks(&mut h, 10);
        let c = &h.sample_metrics().containers[0];
        assert_eq!(c.cpu_throttle, 0.0);
        assert_eq!(c.cpu_util, 80.0);
    }

    #[test]
    fn limits_within_capacity_are_granted_fully() {
        let mut h = host();
        for (i, l) in [300, 300, 300].into_iter().enumerate() {
            h.run_container(cid(&format!("c{i}")), "c", flat_cpu(l), LimitSet::new(l, 64), 0)
                .unwrap();
        }
        run_ticks(&mut h, 5);
        let s = h.sample_metrics();
        assert!(s.containers.iter().all(|c| c.cpu_util == 300.0 && c.cpu_throttle == 0.0));
    }

    #[test]
    fn saturated_host_shares_fairly() {
        assert_eq!(fair_share(&[600, 600], 1000), vec![500, 500]);
        assert_eq!(fair_share(&[100, 600, 600], 1000), vec![100, 450, 450]);
        assert_eq!(fair_share(&[10, 20], 1000), vec![10, 20]);
    }

    #[test]
    fn low_memory_limit_kills_on_off_workload() {
        let mut h = host();
        h.run_container(
            cid("m3"),
            "Memory 3",
            spec(Pattern::OnOff, WorkloadClass::MemDominant),
            LimitSet::new(100, 10),
            0,
        )
        .unwrap();
        let ev = run_ticks(&mut h, 1);
        assert_eq!(ev.len(), 1);
        assert!(matches!(ev[0].kind, HostEventKind::OomKill { .. }));
        assert!(ev[0].is_premature());
        assert_eq!(h.container(&cid("m3")).unwrap().status, ContainerStatus::KilledOom);
    }

    #[test]
    fn slow_workload_survives_low_limit_until_demand_grows() {
        let mut h = host();
        h.run_container(
            cid("m1"),
            "Memory 1",
            spec(Pattern::SlowRiseFall, WorkloadClass::MemDominant),
            LimitSet::new(100, 60),
            0,
        )
        .unwrap();
        let ev = run_ticks(&mut h, P);
        assert_eq!(ev.len(), 1);
        assert!(ev[0].t > 0);
    }

    #[test]
    fn limit_updates_apply_from_next_tick() {
        let mut h = host();
        h.run_container(cid("a"), "a", flat_cpu(150), LimitSet::new(200, 64), 0)
            .unwrap();
        run_ticks(&mut h, 10);
        assert_eq!(h.sample_metrics().containers[0].cpu_throttle, 0.0);
        h.update_limits(&cid("a"), LimitSet::new(100, 64)).unwrap();
        run_ticks(&mut h, 10);
        assert_eq!(h.sample_metrics().containers[0].cpu_throttle, 100.0);
    }

    #[test]
    fn lowering_memory_below_usage_kills() {
        let mut h = host();
        h.run_container(
            cid("m3"),
            "Memory 3",
            spec(Pattern::OnOff, WorkloadClass::MemDominant),
            LimitSet::new(100, 150),
            0,
        )
        .unwrap();
        assert!(run_ticks(&mut h, 5).is_empty());
        h.update_limits(&cid("m3"), LimitSet::new(100, 50)).unwrap();
        assert_eq!(run_ticks(&mut h, 1).len(), 1);
        assert_eq!(
            h.update_limits(&cid("m3"), LimitSet::new(100, 150)),
            Err(HostError::NotFound(cid("m3")))
        );
    }

    #[test]
    fn identical_limits_change_nothing() {
        let mut a = host();
        let mut b = host();
        for h in [&mut a, &mut b] {
            h.run_container(cid("x"), "x", flat_cpu(150), LimitSet::new(120, 64), 0)
                .unwrap();
        }
        run_ticks(&mut a, 7);
        run_ticks(&mut b, 7);
        b.update_limits(&cid("x"), LimitSet::new(120, 64)).unwrap();
        run_ticks(&mut a, 7);
        run_ticks(&mut b, 7);
        assert_eq!(a.sample_metrics(), b.sample_metrics());
    }

    #[test]
    fn backlog_drains_when_demand_subsides() {
        let mut h = host();
        let mut s = flat_cpu(150);
        s.period = 20;
        h.run_container(cid("a"), "a", s, LimitSet::new(100, 64), 0).unwrap();
        run_ticks(&mut h, 10);
        assert_eq!(h.container(&cid("a")).unwrap().backlog, 500);
        // Off phase demands 15, leaving 85 per tick to drain.
        run_ticks(&mut h, 10);
        assert_eq!(h.container(&cid("a")).unwrap().backlog, 0);
    }

    #[test]
    fn empty_host_reports_full_availability() {
        let mut h = host();
        run_ticks(&mut h, 3);
        let s = h.sample_metrics();
        assert!(s.containers.is_empty());
        assert_eq!(s.avail, SignedLimits { cpu: 1000, mem: 1000 });
        assert_eq!(s.unallocated, SignedLimits { cpu: 1000, mem: 1000 });
    }

    #[test]
    fn availability_subtracts_usage_and_reservation() {
        let mut h = HostSim::new(
            dev(),
            HostConfig {
                reserved: LimitSet::new(0, 600),
                ..HostConfig::default()
            },
        );
        h.run_container(
            cid("m3"),
            "Memory 3",
            spec(Pattern::OnOff, WorkloadClass::MemDominant),
            LimitSet::new(100, 150),
            0,
        )
        .unwrap();
        run_ticks(&mut h, 10);
        let s = h.sample_metrics();
        assert_eq!(s.avail.mem, 400 - 95);
        assert_eq!(s.unallocated.mem, 400 - 150);
        assert_eq!(s.timestamp, 0);
        run_ticks(&mut h, 10);
        assert_eq!(h.sample_metrics().timestamp, 10);
    }

    #[test]
    fn host_memory_exhaustion_kills_newest() {
        let mut h = HostSim::new(
            dev(),
            HostConfig {
                total: LimitSet::new(1000, 150),
                ..HostConfig::default()
            },
        );
        for id in ["old", "new"] {
            h.run_container(
                cid(id),
                id,
                spec(Pattern::OnOff, WorkloadClass::MemDominant),
                LimitSet::new(100, 120),
                0,
            )
            .unwrap();
        }
        let ev = run_ticks(&mut h, 1);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].container, cid("new"));
        assert!(matches!(ev[0].kind, HostEventKind::HostOom { .. }));
    }

    #[test]
    fn finite_workload_stops() {
        let mut h = host();
        let mut s = spec(Pattern::OnOff, WorkloadClass::CpuDominant);
        s.period = 10;
        s.cycles = Some(1);
        h.run_container(cid("a"), "a", s, LimitSet::new(200, 64), 0).unwrap();
        let ev = run_ticks(&mut h, 11);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, HostEventKind::Stopped);
        assert!(!ev[0].is_premature());
    }

    #[test]
    fn dead_containers_are_reported_once() {
        let mut h = host();
        h.run_container(
            cid("m3"),
            "Memory 3",
            spec(Pattern::OnOff, WorkloadClass::MemDominant),
            LimitSet::new(100, 10),
            0,
        )
        .unwrap();
        run_ticks(&mut h, 3);
        let first = h.sample_metrics();
        assert_eq!(first.containers.len(), 1);
        assert_eq!(first.containers[0].status, ContainerStatus::KilledOom);
        assert!(h.sample_metrics().containers.is_empty());
        assert!(h.container(&cid("m3")).is_some());
    }

    #[test]
    fn zero_limits_are_rejected() {
        let mut h = host();
        assert_eq!(
            h.run_container(cid("a"), "a", flat_cpu(1), LimitSet::new(0, 10), 0),
            Err(HostError::ZeroLimits)
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn capacity_throttle_and_backlog_invariants(
            limits in proptest::collection::vec((20u64..400, 20u64..200), 1..6),
            patterns in proptest::collection::vec(1u8..=5, 6),
            cpu_class in any::<bool>(),
            ticks in 1u64..400,
        ) {
            let mut h = host();
            let class = if cpu_class { WorkloadClass::CpuDominant } else { WorkloadClass::MemDominant };
            for (i, &(c, m)) in limits.iter().enumerate() {
                let s = WorkloadSpec::standard(Pattern::try_from(patterns[i]).unwrap(), class, 50);
                h.run_container(cid(&format!("c{i}")), "c", s, LimitSet::new(c, m), 0).unwrap();
            }
            for _ in 0..ticks {
                h.tick();
            }
            for c in h.all_containers() {
                prop_assert_eq!(c.demanded_work, c.granted_work + c.backlog);
            }
            let s = h.sample_metrics();
            let mut cpu = 0.0;
            for c in &s.containers {
                prop_assert!((0.0..=100.0).contains(&c.cpu_throttle));
                prop_assert!(c.cpu_util <= c.cpu_limit.as_f64() + 1e-9);
                if c.status == ContainerStatus::Running {
                    cpu += c.cpu_util;
                    prop_assert!(c.mem_peak <= c.mem_limit.as_f64());
                }
            }
            prop_assert!(cpu <= 1000.0 + 1e-9);
        }

        #[test]
        fn runs_are_deterministic(seed in any::<u64>(), ticks in 1u64..300) {
            let mk = || {
                let mut h = host();
                let s = WorkloadSpec::standard(Pattern::GentleShake, WorkloadClass::CpuDominant, 60).with_seed(seed);
                h.run_container(cid("a"), "a", s, LimitSet::new(110, 64), 0).unwrap();
                for _ in 0..ticks { h.tick(); }
                h.sample_metrics()
            };
            prop_assert_eq!(mk(), mk());
        }
    }
}
