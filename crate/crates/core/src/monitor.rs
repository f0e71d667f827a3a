//! Metrics scraping, short-term series, retention, exit detection and the
//! optimization cadence.

use serde::{Deserialize, Serialize};

use crate::bus::{Body, DeploymentRequest, OptimizationRequest, Scope};
use crate::device::Ctx;
use crate::events::EventKind;
use crate::hostsim::{ContainerSample, ContainerStatus, HostEvent, HostEventKind, MetricsSample};
use crate::knowledge::RequestStatus;
use crate::model::{LimitRole, LimitSet, OptimizationPolicy, ResourceAmount, SimTime};
use crate::registry::ContentHash;

/// One scrape of one container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: SimTime,
    pub cpu_util: f64,
    pub cpu_limit: ResourceAmount,
    pub cpu_throttle: f64,
    pub mem_util: f64,
    pub mem_peak: f64,
    pub mem_limit: ResourceAmount,
    pub status: ContainerStatus,
}

impl SeriesPoint {
    pub fn from_sample(t: SimTime, s: &ContainerSample) -> Self {
        SeriesPoint {
            t,
            cpu_util: s.cpu_util,
            cpu_limit: s.cpu_limit,
            cpu_throttle: s.cpu_throttle,
            mem_util: s.mem_util,
            mem_peak: s.mem_peak,
            mem_limit: s.mem_limit,
            status: s.status,
        }
    }
}

/// Time-ordered metrics of one container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSeries {
    pub key: String,
    pub retention: SimTime,
    points: Vec<SeriesPoint>,
}

impl MetricsSeries {
    pub fn new(key: impl Into<String>, retention: SimTime) -> Self {
        MetricsSeries {
            key: key.into(),
            retention,
            points: Vec::new(),
        }
    }

    pub fn from_points(key: impl Into<String>, retention: SimTime, points: Vec<SeriesPoint>) -> Option<Self> {
        if points.windows(2).any(|w| w[0].t >= w[1].t) {
            return None;
        }
        Some(MetricsSeries {
            key: key.into(),
            retention,
            points,
        })
    }

    pub fn points(&self) -> &[SeriesPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Appends a point; returns false and drops it if not strictly newer.
    pub fn push(&mut self, point: SeriesPoint) -> bool {
        if self.points.last().is_some_and(|p| p.t >= point.t) {
            return false;
        }
        self.points.push(point);
        true
    }

    /// Points older than `now - retention`, as a series of their own.
    pub fn expired(&self, now: SimTime) -> Option<MetricsSeries> {
        let cutoff = now.checked_sub(self.retention)?;
        let n = self.points.partition_point(|p| p.t < cutoff);
        (n > 0).then(|| MetricsSeries {
            key: self.key.clone(),
            retention: self.retention,
            points: self.points[..n].to_vec(),
        })
    }

    /// Drops the first `n` points.
    pub fn truncate_front(&mut self, n: usize) {
        self.points.drain(..n.min(self.points.len()));
    }
}

/// Retry bookkeeping for one deployment request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryState {
    pub request_id: String,
    pub attempts: u32,
    pub max_attempts: u32,
    pub last_target: LimitSet,
}

/// Target of deployment attempt `attempt`: the request limits first, then
/// the base limits, then base memory raised by one scale step per further
/// attempt. CPU stays at its base value on retries.
pub fn retry_target(
    attempt: u32,
    request: LimitSet,
    base: LimitSet,
    policy: &OptimizationPolicy,
    mem_max: ResourceAmount,
) -> (LimitRole, LimitSet) {
    match attempt {
        0 | 1 => (LimitRole::Request, request),
        2 => (LimitRole::Base, base),
        k => {
            let steps = u64::from(k - 2);
            let mem = base
                .mem
                .0
                .saturating_add(steps.saturating_mul(policy.scale_up.mem.0))
                .min(mem_max.0.max(base.mem.0));
            (LimitRole::Escalated, LimitSet::new(base.cpu.0, mem))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    pub scrape_interval: SimTime,
    pub retention: SimTime,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            scrape_interval: 10,
            retention: 86_400,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Monitor {
    config: MonitorConfig,
    scrapes: u64,
}

impl Monitor {
    pub fn new(config: MonitorConfig) -> Self {
        Monitor { config, scrapes: 0 }
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    pub fn scrapes(&self) -> u64 {
        self.scrapes
    }

    pub fn is_scrape_time(&self, t: SimTime) -> bool {
        t.is_multiple_of(self.config.scrape_interval.max(1))
    }

    /// Samples the host, stores per-container points and publishes the
    /// sample as a monitoring result.
    pub fn scrape_and_publish(&mut self, ctx: &mut Ctx<'_>) -> MetricsSample {
        let sample = ctx.host.sample_metrics();
        for c in &sample.containers {
            let retention = self.config.retention;
            ctx.knowledge
                .series
                .entry(c.container.clone())
                .or_insert_with(|| MetricsSeries::new(c.container.as_str(), retention))
                .push(SeriesPoint::from_sample(sample.timestamp, c));
        }
        self.scrapes += 1;
        let corr = format!("scrape-{}", ctx.now);
        ctx.bus.send(Body::MonitoringResult(sample.clone()), corr);
        sample
    }

    /// Reacts to container exits: premature ones are retried with an
    /// escalated target until attempts run out.
    pub fn detect_premature_exit(&mut self, ctx: &mut Ctx<'_>, events: &[HostEvent]) {
        let mem_max = ctx.policy.mem_ceiling(ctx.host.config().total.mem);
        for ev in events {
            let Some(dep) = ctx.knowledge.deployment_mut(&ev.container) else {
                continue;
            };
            dep.status = match ev.kind {
                HostEventKind::Stopped => ContainerStatus::Stopped,
                _ => ContainerStatus::KilledOom,
            };
            let dep = dep.clone();
            match ev.kind {
                HostEventKind::Stopped => {
                    ctx.record(EventKind::Stopped {
                        container: ev.container.clone(),
                    });
                    ctx.knowledge
                        .requests
                        .insert(dep.request_id.clone(), RequestStatus::Finished);
                    continue;
                }
                HostEventKind::OomKill { demand, limit } => ctx.record(EventKind::OomKilled {
                    container: ev.container.clone(),
                    demand,
                    limit,
                }),
                HostEventKind::HostOom { demand } => ctx.record(EventKind::OomKilled {
                    container: ev.container.clone(),
                    demand,
                    limit: dep.limits.mem,
                }),
            }

            let max_attempts = ctx.policy.max_attempts;
            let state = ctx
                .knowledge
                .retries
                .entry(dep.request_id.clone())
                .or_insert_with(|| RetryState {
                    request_id: dep.request_id.clone(),
                    attempts: dep.attempt,
                    max_attempts,
                    last_target: dep.limits,
                });
            state.attempts = state.attempts.max(dep.attempt);
            if state.attempts >= state.max_attempts {
                let attempts = state.attempts;
                ctx.record(EventKind::RetriesExhausted {
                    request_id: dep.request_id.clone(),
                    attempts,
                });
                ctx.knowledge.requests.insert(
                    dep.request_id.clone(),
                    RequestStatus::Failed {
                        reason: format!("killed after {attempts} attempts"),
                    },
                );
                continue;
            }
            let attempt = state.attempts + 1;
            let (role, target) = retry_target(attempt, dep.request, dep.base, ctx.policy, mem_max);
            state.attempts = attempt;
            state.last_target = target;
            ctx.knowledge
                .requests
                .insert(dep.request_id.clone(), RequestStatus::Pending);
            ctx.record(EventKind::RetryScheduled {
                request_id: dep.request_id.clone(),
                attempt,
                role,
                target,
            });
            let req = DeploymentRequest {
                request_id: dep.request_id.clone(),
                owner: dep.owner.clone(),
                image: dep.image.clone(),
                requester: "monitor".into(),
                attempt,
                target_role: role,
                target: Some(target),
                scope: Scope::Local,
            };
            let corr = format!("{}/a{attempt}", dep.request_id);
            ctx.bus.send(Body::DeploymentRequest(req), corr);
        }
    }

    /// Archives points older than the retention period. Series whose
    /// archive fails are kept and retried on the next call.
    pub fn enforce_retention(&mut self, ctx: &mut Ctx<'_>) -> Vec<ContentHash> {
        let device = ctx.device();
        let mut hashes = Vec::new();
        let keys: Vec<_> = ctx.knowledge.series.keys().cloned().collect();
        for key in keys {
            let Some(old) = ctx.knowledge.series[&key].expired(ctx.now) else {
                continue;
            };
            if let Ok(hash) = ctx.registry.archive_metrics(device, &old) {
                let series = ctx.knowledge.series.get_mut(&key).expect("key exists");
                series.truncate_front(old.len());
                if series.is_empty() {
                    ctx.knowledge.series.remove(&key);
                }
                ctx.record(EventKind::Archived {
                    key: old.key.clone(),
                    points: old.len(),
                    hash: hash.as_str().to_string(),
                });
                hashes.push(hash);
            }
        }
        hashes
    }

    /// Publishes one optimization request per container that is past its
    /// warmup. Cycles fall on multiples of the optimization interval.
    pub fn schedule_optimization(&mut self, ctx: &mut Ctx<'_>) -> usize {
        let interval = ctx.policy.optimization_interval;
        if ctx.now == 0 || !ctx.now.is_multiple_of(interval) {
            return 0;
        }
        let cycle = ctx.now / interval;
        let warmup = ctx.policy.warmup();
        let due: Vec<_> = ctx
            .knowledge
            .active()
            .filter(|d| ctx.now.saturating_sub(d.started_at) >= warmup)
            .map(|d| d.container.clone())
            .collect();
        let batch_size = due.len() as u32;
        for container in &due {
            let req = OptimizationRequest {
                cycle,
                container: container.clone(),
                batch_size,
            };
            ctx.bus
                .send(Body::DeploymentOptimizationRequest(req), format!("opt-{cycle}"));
        }
        due.len()
    }
}
