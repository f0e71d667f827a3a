//! Admission control and optimization targets.
//!
//! Predicted availability subtracts, for every running container, the larger
//! of its current limit and its forecast utilization peak. A deployment is
//! admitted only when its target is strictly below that availability for
//! both resources. Optimization runs once per cycle over all due containers
//! in deployment order, charging each approved increase against the
//! remaining availability.

use std::collections::{BTreeMap, VecDeque};

use crate::bus::{
    AnalysisRequest, Body, ContainerForecast, ForecastOutcome, ForecastRequest, LimitUpdate,
    Message, SignedLimits, Verdict,
};
use crate::device::Ctx;
use crate::events::EventKind;
use crate::knowledge::Knowledge;
use crate::model::{
    delta_limit, ContainerId, LimitDelta, LimitSet, OptimizationPolicy, ResourceAmount, ResourceKind,
    SimTime,
};

/// Forecast peaks of one container.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peaks {
    pub cpu: f64,
    pub mem: f64,
    pub throttle: f64,
    pub fallback: bool,
}

impl Peaks {
    pub fn of(outcome: &ForecastOutcome) -> Option<Peaks> {
        match outcome {
            ForecastOutcome::Ok {
                cpu_util,
                mem_util,
                throttle,
                fallback,
            } => {
                let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
                Some(Peaks {
                    cpu: max(cpu_util),
                    mem: max(mem_util),
                    throttle: max(throttle),
                    fallback: *fallback,
                })
            }
            ForecastOutcome::Error { .. } => None,
        }
    }
}

/// Input to availability prediction for one running container.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionInput {
    pub container: ContainerId,
    pub current: LimitSet,
    pub forecast: Option<Peaks>,
    /// Latest observed (cpu, mem) utilization; used without a forecast.
    pub last_util: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    /// Clamped utilization peak per container.
    pub per_container: BTreeMap<ContainerId, LimitSet>,
    pub avail: SignedLimits,
}

fn signed(a: ResourceAmount) -> i64 {
    i64::try_from(a.0).unwrap_or(i64::MAX)
}

/// Predicted availability of a host with capacity `total` running
/// `inputs`, holding back `reserve`.
pub fn predict_availability(inputs: &[PredictionInput], total: LimitSet, reserve: LimitSet) -> PredictionSet {
    let mut per_container = BTreeMap::new();
    let mut used = SignedLimits::default();
    for i in inputs {
        let (cpu, mem) = match (i.forecast, i.last_util) {
            (Some(p), _) => (p.cpu, p.mem),
            (None, Some(u)) => u,
            (None, None) => (0.0, 0.0),
        };
        let clamped = LimitSet {
            cpu: i.current.cpu.max(ResourceAmount::from_f64_ceil(cpu)),
            mem: i.current.mem.max(ResourceAmount::from_f64_ceil(mem)),
        };
        used.cpu += signed(clamped.cpu);
        used.mem += signed(clamped.mem);
        per_container.insert(i.container.clone(), clamped);
    }
    PredictionSet {
        per_container,
        avail: SignedLimits {
            cpu: signed(total.cpu) - used.cpu - signed(reserve.cpu),
            mem: signed(total.mem) - used.mem - signed(reserve.mem),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissionVerdict {
    pub accepted: bool,
    pub target: LimitSet,
    pub avail: SignedLimits,
    pub reason: String,
}

/// Accepts iff the target is strictly below predicted availability for
/// every resource.
pub fn admit(target: LimitSet, avail: SignedLimits) -> AdmissionVerdict {
    let short: Vec<String> = ResourceKind::ALL
        .iter()
        .filter_map(|&k| {
            let (t, a) = (signed(target.get(k)), avail_of(avail, k));
            (t >= a).then(|| format!("{k} target {t} not below availability {a}"))
        })
        .collect();
    AdmissionVerdict {
        accepted: short.is_empty(),
        target,
        avail,
        reason: if short.is_empty() {
            "fits predicted availability".into()
        } else {
            short.join("; ")
        },
    }
}

fn avail_of(a: SignedLimits, k: ResourceKind) -> i64 {
    match k {
        ResourceKind::Cpu => a.cpu,
        ResourceKind::Mem => a.mem,
    }
}

/// Memory target for a container.
///
/// Scales up when the larger of forecast peak and observed maximum, with
/// margin, exceeds the current limit. Scales down when the forecast stays
/// within the margin of the observed maximum, unless the step would cut
/// into the margin.
/// `None` forecast means no change.
pub fn optimize_memory(
    current: ResourceAmount,
    forecast_peak: Option<f64>,
    observed_max: Option<f64>,
    policy: &OptimizationPolicy,
    mem_max: ResourceAmount,
) -> ResourceAmount {
    let Some(peak) = forecast_peak else {
        return current;
    };
    let observed = observed_max.unwrap_or(peak);
    let need = peak.max(observed) * policy.mem_margin;
    let lo = policy.mem_min;
    let hi = mem_max.max(lo);
    if need > current.as_f64() {
        let up = ResourceAmount(current.0.saturating_add(policy.scale_up.mem.0));
        return up.max(lo).min(hi);
    }
    if peak <= observed * policy.mem_margin {
        let down = current.saturating_sub(policy.scale_down.mem).max(lo).min(hi);
        if down.as_f64() < need {
            return current;
        }
        return down;
    }
    current
}

/// CPU target for a container.
///
/// (a) forecast peak above the limit: scale up by one step;
/// (b) otherwise heavy forecast throttling: scale up by the step weighted
///     with the throttle percentage;
/// (c) otherwise the forecast peak times the buffer, unless that would
///     exceed the current limit.
pub fn optimize_cpu(
    current: ResourceAmount,
    forecast_peak: Option<f64>,
    throttle_peak: Option<f64>,
    policy: &OptimizationPolicy,
    host_total: ResourceAmount,
) -> ResourceAmount {
    let Some(peak) = forecast_peak else {
        return current;
    };
    let throttle = throttle_peak.unwrap_or(0.0);
    let step = policy.scale_up.cpu;
    let target = if peak > current.as_f64() {
        ResourceAmount(current.0.saturating_add(step.0))
    } else if throttle > policy.throttle_limit {
        let adjusted = ResourceAmount::from_f64_ceil(step.as_f64() * throttle / 100.0);
        ResourceAmount(current.0.saturating_add(adjusted.0))
    } else {
        let buffered = ResourceAmount::from_f64_ceil(peak * policy.buffer_cpu);
        if buffered > current {
            current
        } else {
            buffered
        }
    };
    target.max(ResourceAmount(1)).min(host_total.max(ResourceAmount(1)))
}

/// Charges a signed limit change against predicted availability.
pub fn account_optimization(avail: SignedLimits, delta: LimitDelta) -> SignedLimits {
    SignedLimits {
        cpu: avail.cpu - delta.cpu,
        mem: avail.mem - delta.mem,
    }
}

/// Keeps decreases; keeps an increase only if it is strictly below the
/// remaining availability of its resource.
pub fn approve(delta: LimitDelta, avail: SignedLimits) -> LimitDelta {
    let keep = |d: i64, a: i64| if d <= 0 || d < a { d } else { 0 };
    LimitDelta {
        cpu: keep(delta.cpu, avail.cpu),
        mem: keep(delta.mem, avail.mem),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Job {
    Admission { corr: String, req: AnalysisRequest },
    Optimization { cycle: u64, containers: Vec<ContainerId> },
}

impl Job {
    fn corr(&self) -> String {
        match self {
            Job::Admission { corr, .. } => corr.clone(),
            Job::Optimization { cycle, .. } => format!("opt-{cycle}"),
        }
    }
}

/// The analyzer component. Jobs run one at a time: each waits for its
/// forecast response before the next starts.
#[derive(Debug, Clone, Default)]
pub struct Analyzer {
    horizon: usize,
    queue: VecDeque<Job>,
    in_flight: Option<Job>,
    batches: BTreeMap<u64, Vec<ContainerId>>,
}

impl Analyzer {
    pub fn new(horizon: usize) -> Self {
        Analyzer {
            horizon: horizon.max(1),
            ..Default::default()
        }
    }

    pub fn is_idle(&self) -> bool {
        self.in_flight.is_none() && self.queue.is_empty()
    }

    pub fn handle(&mut self, ctx: &mut Ctx<'_>, msg: &Message) {
        match &msg.body {
            Body::DeploymentAnalysisRequest(req) => {
                self.queue.push_back(Job::Admission {
                    corr: msg.correlation_id.clone(),
                    req: req.clone(),
                });
            }
            Body::DeploymentOptimizationRequest(req) => {
                let batch = self.batches.entry(req.cycle).or_default();
                batch.push(req.container.clone());
                if batch.len() >= req.batch_size as usize {
                    let containers = self.batches.remove(&req.cycle).unwrap_or_default();
                    self.queue.push_back(Job::Optimization {
                        cycle: req.cycle,
                        containers,
                    });
                }
            }
            Body::ForecastResponse(resp) => {
                let matches = self
                    .in_flight
                    .as_ref()
                    .is_some_and(|j| j.corr() == msg.correlation_id);
                if matches {
                    let job = self.in_flight.take().expect("checked above");
                    match job {
                        Job::Admission { corr, req } => self.finish_admission(ctx, corr, req, &resp.results),
                        Job::Optimization { cycle, containers } => {
                            self.finish_optimization(ctx, cycle, &containers, &resp.results)
                        }
                    }
                }
            }
            _ => return,
        }
        self.start_next(ctx);
    }

    fn start_next(&mut self, ctx: &mut Ctx<'_>) {
        if self.in_flight.is_some() {
            return;
        }
        let Some(job) = self.queue.pop_front() else {
            return;
        };
        let containers = ctx.knowledge.active().map(|d| d.container.clone()).collect();
        let corr = job.corr();
        self.in_flight = Some(job);
        ctx.bus.send(
            Body::ForecastRequest(ForecastRequest {
                containers,
                horizon: self.horizon,
            }),
            corr,
        );
    }

    fn prediction(ctx: &Ctx<'_>, results: &[ContainerForecast]) -> PredictionSet {
        let by_id: BTreeMap<&ContainerId, &ForecastOutcome> =
            results.iter().map(|r| (&r.container, &r.outcome)).collect();
        let mut inputs: Vec<PredictionInput> = ctx
            .knowledge
            .active()
            .map(|d| PredictionInput {
                container: d.container.clone(),
                current: d.limits,
                forecast: by_id.get(&d.container).and_then(|o| Peaks::of(o)),
                last_util: ctx.knowledge.last_util(&d.container),
            })
            .collect();
        for (key, target) in &ctx.knowledge.reservations {
            inputs.push(PredictionInput {
                container: ContainerId::new(format!("reserved:{key}")).expect("non-empty"),
                current: *target,
                forecast: None,
                last_util: None,
            });
        }
        predict_availability(&inputs, ctx.host.config().usable(), ctx.policy.reserve)
    }

    fn finish_admission(&mut self, ctx: &mut Ctx<'_>, corr: String, req: AnalysisRequest, results: &[ContainerForecast]) {
        let pred = Self::prediction(ctx, results);
        let verdict = admit(req.target, pred.avail);
        ctx.record(EventKind::Admission {
            request_id: req.request_id.clone(),
            image: req.image.clone(),
            attempt: req.attempt,
            role: req.role,
            target: req.target,
            predicted_avail: pred.avail,
            accepted: verdict.accepted,
        });
        let body = Verdict {
            request_id: req.request_id.clone(),
            attempt: req.attempt,
            role: req.role,
            target: req.target,
            predicted_avail: pred.avail,
            reason: verdict.reason,
        };
        if verdict.accepted {
            ctx.knowledge
                .reservations
                .insert(Knowledge::reservation_key(&req.request_id, req.attempt), req.target);
            ctx.bus.send(Body::DeploymentAccept(body), corr);
        } else {
            ctx.bus.send(Body::DeploymentCancel(body), corr);
        }
    }

    fn finish_optimization(
        &mut self,
        ctx: &mut Ctx<'_>,
        cycle: u64,
        containers: &[ContainerId],
        results: &[ContainerForecast],
    ) {
        let pred = Self::prediction(ctx, results);
        let mut avail = pred.avail;
        let since: SimTime = ctx.now.saturating_sub(ctx.policy.optimization_interval);
        let mem_max = ctx.policy.mem_ceiling(ctx.host.config().total.mem);
        let cpu_max = ctx.host.config().usable().cpu;
        let order: Vec<ContainerId> = ctx
            .knowledge
            .active()
            .filter(|d| containers.contains(&d.container))
            .map(|d| d.container.clone())
            .collect();
        for id in order {
            let dep = ctx.knowledge.deployment(&id).expect("active deployment");
            let current = dep.limits;
            let peaks = results
                .iter()
                .find(|r| r.container == id)
                .and_then(|r| Peaks::of(&r.outcome))
                .filter(|p| !p.fallback);
            let observed = ctx.knowledge.observed_mem_max(&id, since);
            let proposed = LimitSet {
                cpu: optimize_cpu(
                    current.cpu,
                    peaks.map(|p| p.cpu),
                    peaks.map(|p| p.throttle),
                    ctx.policy,
                    cpu_max,
                ),
                mem: optimize_memory(current.mem, peaks.map(|p| p.mem), observed, ctx.policy, mem_max),
            };
            let approved = approve(delta_limit(&proposed, &current), avail);
            let applied = LimitSet {
                cpu: current.cpu.offset(approved.cpu).unwrap_or(current.cpu),
                mem: current.mem.offset(approved.mem).unwrap_or(current.mem),
            };
            ctx.record(EventKind::Optimized {
                cycle,
                container: id.clone(),
                previous: current,
                proposed,
                applied,
                predicted_avail: avail,
            });
            avail = account_optimization(avail, approved);
            let dep = ctx.knowledge.deployment_mut(&id).expect("active deployment");
            if applied == current {
                dep.stable_cycles += 1;
            } else {
                dep.stable_cycles = 0;
                ctx.bus.send(
                    Body::DeploymentUpdate(LimitUpdate {
                        cycle,
                        container: id.clone(),
                        previous: current,
                        limits: applied,
                    }),
                    format!("opt-{cycle}"),
                );
            }
        }
    }
}
