//! Declarative checks evaluated against a finished run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bus::Action;
use crate::events::EventKind;
use crate::hostsim::Workload;
use crate::model::{DeviceId, ImageName, LimitSet, ResourceAmount, ResourceKind, SimTime};
use crate::monitor::retry_target;

use super::config::ScenarioConfig;
use super::report::{ContainerInfo, RunReport};

/// One expected admission decision; the target is compared on the image's
/// dominant resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub accept: bool,
    pub target: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expectation {
    /// The admission decisions for external requests (first attempts, with
    /// their base fallback), in log order, restricted to `image` when given,
    /// equal `sequence` exactly.
    Admissions {
        #[serde(default)]
        image: Option<ImageName>,
        sequence: Vec<Decision>,
    },
    /// Devices that executed the external requests, in request order.
    Executors { sequence: Vec<DeviceId> },
    NoOomKills,
    /// Every request lost at least `min` containers to OOM kills.
    OomKillsPerRequest { min: usize },
    /// Every request ends with a running container.
    AllRunning,
    /// From `cycles` optimization cycles after warmup to the end of the
    /// run, the final container of every request whose image is dominant
    /// in `resource` keeps its limit within `[peak·lo, peak·hi]`.
    LimitsWithin {
        resource: ResourceKind,
        lo: f64,
        hi: f64,
        cycles: u64,
    },
    /// The first window of every container whose CPU demand exceeds its
    /// limit throughout that window is fully throttled.
    InitialThrottleFull,
    /// From `cycles` optimization cycles after warmup, every window of the
    /// final containers stays strictly below `limit` percent throttling.
    ThrottleBelow { limit: f64, cycles: u64 },
    /// From `cycles` optimization cycles after warmup, backlog never exceeds
    /// its maximum before that point and is drained by the end of the run.
    BacklogSettles { cycles: u64 },
    /// Retry targets follow the escalation formula for every request.
    EscalationFormula,
    /// While a later request warms up, earlier containers change each limit
    /// by at most one scale step.
    ExistingFirst,
    /// The containers of `image` never get more CPU than they started with
    /// and are throttled at or above the throttle limit in at least
    /// `min_intervals` separate runs of windows.
    ThrottledWithoutUpscale { image: ImageName, min_intervals: usize },
    /// Per deployed request: exactly `analyses` analysis requests and
    /// exactly `deploy_messages` deployment-request publications
    /// cluster-wide.
    MessageCounts { analyses: usize, deploy_messages: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectationResult {
    pub description: String,
    pub passed: bool,
    pub detail: String,
}

type Check = Result<(), String>;

impl Expectation {
    pub fn describe(&self) -> String {
        match self {
            Expectation::Admissions { image, sequence } => {
                let seq: Vec<String> = sequence
                    .iter()
                    .map(|d| format!("{}({})", if d.accept { "accept" } else { "reject" }, d.target))
                    .collect();
                match image {
                    Some(i) => format!("admissions of {i}: {}", seq.join(", ")),
                    None => format!("admissions: {}", seq.join(", ")),
                }
            }
            Expectation::Executors { sequence } => {
                let seq: Vec<String> = sequence.iter().map(|d| d.to_string()).collect();
                format!("executors: {}", seq.join(", "))
            }
            Expectation::NoOomKills => "no OOM kills".into(),
            Expectation::OomKillsPerRequest { min } => format!("at least {min} OOM kills per request"),
            Expectation::AllRunning => "every request ends running".into(),
            Expectation::LimitsWithin { resource, lo, hi, cycles } => format!(
                "{resource} limits within [{lo}·peak, {hi}·peak] after {cycles} cycles"
            ),
            Expectation::InitialThrottleFull => "overloaded containers start fully throttled".into(),
            Expectation::ThrottleBelow { limit, cycles } => {
                format!("throttling below {limit}% after {cycles} cycles")
            }
            Expectation::BacklogSettles { cycles } => format!("backlog settles after {cycles} cycles"),
            Expectation::EscalationFormula => "retry targets follow the escalation formula".into(),
            Expectation::ExistingFirst => "existing containers move at most one step during warmup".into(),
            Expectation::ThrottledWithoutUpscale { image, min_intervals } => format!(
                "{image} throttled in {min_intervals}+ intervals without upscale"
            ),
            Expectation::MessageCounts {
                analyses,
                deploy_messages,
            } => format!("{analyses} analysis and {deploy_messages} deploy messages per request"),
        }
    }

    pub fn evaluate(&self, report: &RunReport, config: &ScenarioConfig) -> ExpectationResult {
        let outcome = match self {
            Expectation::Admissions { image, sequence } => admissions(report, config, image.as_ref(), sequence),
            Expectation::Executors { sequence } => executors(report, sequence),
            Expectation::NoOomKills => match report.oom_kills() {
                0 => Ok(()),
                n => Err(format!("{n} OOM kills")),
            },
            Expectation::OomKillsPerRequest { min } => oom_per_request(report, *min),
            Expectation::AllRunning => all_running(report),
            Expectation::LimitsWithin { resource, lo, hi, cycles } => {
                limits_within(report, config, *resource, *lo, *hi, *cycles)
            }
            Expectation::InitialThrottleFull => initial_throttle(report, config),
            Expectation::ThrottleBelow { limit, cycles } => throttle_below(report, config, *limit, *cycles),
            Expectation::BacklogSettles { cycles } => backlog_settles(report, config, *cycles),
            Expectation::EscalationFormula => escalation(report, config),
            Expectation::ExistingFirst => existing_first(report, config),
            Expectation::ThrottledWithoutUpscale { image, min_intervals } => {
                throttled_without_upscale(report, config, image, *min_intervals)
            }
            Expectation::MessageCounts {
                analyses,
                deploy_messages,
            } => message_counts(report, *analyses, *deploy_messages),
        };
        ExpectationResult {
            description: self.describe(),
            passed: outcome.is_ok(),
            detail: outcome.err().unwrap_or_else(|| "ok".into()),
        }
    }
}

pub fn evaluate_all(report: &RunReport, config: &ScenarioConfig) -> Vec<ExpectationResult> {
    config.expectations.iter().map(|e| e.evaluate(report, config)).collect()
}

fn dominant_of(config: &ScenarioConfig, image: &ImageName) -> ResourceKind {
    config
        .images
        .iter()
        .find(|i| &i.name == image)
        .map(|i| i.class.dominant())
        .unwrap_or(ResourceKind::Mem)
}

fn admissions(report: &RunReport, config: &ScenarioConfig, image: Option<&ImageName>, want: &[Decision]) -> Check {
    let got: Vec<Decision> = report
        .decisions()
        .into_iter()
        .filter(|d| d.attempt == 1 && image.is_none_or(|i| &d.image == i))
        .map(|d| Decision {
            accept: d.accepted,
            target: d.target.get(dominant_of(config, &d.image)).0,
        })
        .collect();
    if got == want {
        Ok(())
    } else {
        Err(format!("got {got:?}"))
    }
}

fn executors(report: &RunReport, want: &[DeviceId]) -> Check {
    let got: Vec<DeviceId> = report.executors().into_iter().map(|(_, d)| d).collect();
    if got == want {
        Ok(())
    } else {
        let s: Vec<String> = got.iter().map(|d| d.to_string()).collect();
        Err(format!("got {}", s.join(", ")))
    }
}

fn oom_per_request(report: &RunReport, min: usize) -> Check {
    let mut kills: BTreeMap<&str, usize> = report.requests.iter().map(|r| (r.request_id.as_str(), 0)).collect();
    for e in &report.events {
        if let EventKind::OomKilled { container, .. } = &e.kind {
            if let Some(c) = report.containers.iter().find(|c| &c.container == container) {
                *kills.entry(c.request_id.as_str()).or_default() += 1;
            }
        }
    }
    let short: Vec<String> = kills
        .iter()
        .filter(|(_, n)| **n < min)
        .map(|(r, n)| format!("{r}:{n}"))
        .collect();
    if short.is_empty() {
        Ok(())
    } else {
        Err(format!("too few kills: {}", short.join(", ")))
    }
}

fn all_running(report: &RunReport) -> Check {
    use crate::knowledge::RequestStatus;
    let bad: Vec<String> = report
        .requests
        .iter()
        .filter(|r| !matches!(report.statuses.get(&r.request_id), Some(RequestStatus::Running { .. })))
        .map(|r| format!("{}:{:?}", r.request_id, report.statuses.get(&r.request_id)))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad.join(", "))
    }
}

/// Start of the first window after `cycles` optimization cycles have run
/// for a container started at `start`.
fn settle_time(config: &ScenarioConfig, start: SimTime, cycles: u64) -> SimTime {
    let interval = config.policy.optimization_interval;
    let eligible = start + config.policy.warmup();
    let first = eligible.div_ceil(interval).max(1) * interval;
    first + cycles.saturating_sub(1) * interval + config.monitor.scrape_interval
}

fn limit_of(row: &super::report::TraceRow, kind: ResourceKind) -> ResourceAmount {
    match kind {
        ResourceKind::Cpu => row.cpu_limit,
        ResourceKind::Mem => row.mem_limit,
    }
}

fn limits_within(report: &RunReport, config: &ScenarioConfig, kind: ResourceKind, lo: f64, hi: f64, cycles: u64) -> Check {
    let mut problems = Vec::new();
    for c in report.final_containers() {
        if c.spec.class.dominant() != kind {
            continue;
        }
        let peak = c.spec.peak.as_f64();
        let (min, max) = (peak * lo, peak * hi);
        let from = settle_time(config, c.started_at, cycles);
        let mut seen = false;
        for r in report.rows(&c.container).filter(|r| r.t >= from) {
            seen = true;
            let l = limit_of(r, kind).as_f64();
            if l < min - 1e-9 || l > max + 1e-9 {
                problems.push(format!("{} at t={}: {l} outside [{min}, {max}]", c.container, r.t));
                break;
            }
        }
        if !seen {
            problems.push(format!("{}: no samples after t={from}", c.container));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems.join("; "))
    }
}

fn initial_throttle(report: &RunReport, config: &ScenarioConfig) -> Check {
    let scrape = config.monitor.scrape_interval;
    let mut problems = Vec::new();
    let mut checked = 0;
    for c in &report.containers {
        let w = Workload::new(c.spec.clone());
        let Some(first) = report.rows(&c.container).next() else {
            continue;
        };
        let offset = first.t.saturating_sub(c.started_at);
        let overloaded = (offset..offset + scrape).all(|t| w.demand(t).cpu > c.initial_limits.cpu);
        if overloaded {
            checked += 1;
            if first.cpu_throttle < 100.0 - 1e-9 {
                problems.push(format!("{}: {:.1}%", c.container, first.cpu_throttle));
            }
        }
    }
    if checked == 0 {
        return Err("no container starts overloaded".into());
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems.join("; "))
    }
}

fn throttle_below(report: &RunReport, config: &ScenarioConfig, limit: f64, cycles: u64) -> Check {
    let mut problems = Vec::new();
    for c in report.final_containers() {
        let from = settle_time(config, c.started_at, cycles);
        if let Some(r) = report
            .rows(&c.container)
            .find(|r| r.t >= from && r.cpu_throttle >= limit)
        {
            problems.push(format!("{} at t={}: {:.1}%", c.container, r.t, r.cpu_throttle));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems.join("; "))
    }
}

fn backlog_settles(report: &RunReport, config: &ScenarioConfig, cycles: u64) -> Check {
    let mut problems = Vec::new();
    for c in report.final_containers() {
        let from = settle_time(config, c.started_at, cycles);
        let before = report.rows(&c.container).filter(|r| r.t < from).map(|r| r.backlog).max().unwrap_or(0);
        let after = report.rows(&c.container).filter(|r| r.t >= from).map(|r| r.backlog).max().unwrap_or(0);
        let last = report.rows(&c.container).last().map(|r| r.backlog).unwrap_or(0);
        if after > before || last > 0 {
            problems.push(format!("{}: max {before} before, {after} after, {last} at end", c.container));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems.join("; "))
    }
}

fn escalation(report: &RunReport, config: &ScenarioConfig) -> Check {
    let mut checked = 0;
    for e in &report.events {
        let EventKind::RetryScheduled {
            request_id,
            attempt,
            target,
            ..
        } = &e.kind
        else {
            continue;
        };
        let Some(req) = report.requests.iter().find(|r| &r.request_id == request_id) else {
            return Err(format!("retry for unknown request {request_id}"));
        };
        let Some(img) = config.image(&req.owner, &req.image) else {
            return Err(format!("unknown image {}", req.image));
        };
        let policy = &config.policy;
        let request = LimitSet::new(
            img.limits.request_cpu.unwrap_or(policy.default_request.cpu.0),
            img.limits.request_mem.unwrap_or(policy.default_request.mem.0),
        );
        let base = LimitSet::new(
            img.limits.base_cpu.unwrap_or(policy.default_base.cpu.0.min(request.cpu.0)),
            img.limits.base_mem.unwrap_or(policy.default_base.mem.0.min(request.mem.0)),
        );
        let device = config
            .devices
            .iter()
            .find(|d| d.id == e.device)
            .map(|d| d.host.total.mem)
            .unwrap_or(ResourceAmount(0));
        let mem_max = policy.mem_ceiling(device);
        let k = u64::from(*attempt);
        let want = match k {
            1 => request,
            2 => base,
            _ => LimitSet {
                cpu: base.cpu,
                mem: ResourceAmount((base.mem.0 + (k - 2) * policy.scale_up.mem.0).min(mem_max.0.max(base.mem.0))),
            },
        };
        if *target != want {
            return Err(format!("{request_id} attempt {attempt}: got {target:?}, want {want:?}"));
        }
        let (_, via_monitor) = retry_target(*attempt, request, base, policy, mem_max);
        if via_monitor != want {
            return Err(format!("retry_target disagrees at attempt {attempt}"));
        }
        checked += 1;
    }
    if checked == 0 {
        Err("no retries scheduled".into())
    } else {
        Ok(())
    }
}

fn existing_first(report: &RunReport, config: &ScenarioConfig) -> Check {
    let warmup = config.policy.warmup();
    let mut problems = Vec::new();
    let mut pairs = 0;
    for (i, newcomer) in report.containers.iter().enumerate() {
        let earlier: Vec<&ContainerInfo> = report.containers[..i]
            .iter()
            .filter(|c| c.device == newcomer.device && c.started_at < newcomer.started_at)
            .collect();
        if earlier.is_empty() {
            continue;
        }
        let (from, to) = (newcomer.started_at, newcomer.started_at + warmup);
        for old in earlier {
            let rows: Vec<_> = report.rows(&old.container).filter(|r| r.t >= from && r.t <= to).collect();
            let Some(first) = report.rows(&old.container).filter(|r| r.t <= from).last().or(rows.first().copied())
            else {
                continue;
            };
            pairs += 1;
            for r in &rows {
                for kind in ResourceKind::ALL {
                    let d = limit_of(r, kind).0 as i64 - limit_of(first, kind).0 as i64;
                    let step = if d > 0 {
                        config.policy.scale_up.get(kind).0
                    } else {
                        // A downscale toward the forecast can be at most one
                        // scale-down step, or the CPU buffer target.
                        config.policy.scale_down.get(kind).0.max(config.policy.scale_up.get(kind).0)
                    };
                    if d.unsigned_abs() > step {
                        problems.push(format!(
                            "{} moved {kind} by {d} while {} warmed up",
                            old.container, newcomer.container
                        ));
                    }
                }
            }
        }
    }
    problems.dedup();
    if pairs == 0 {
        Err("no overlapping containers".into())
    } else if problems.is_empty() {
        Ok(())
    } else {
        Err(problems.join("; "))
    }
}

fn throttled_without_upscale(report: &RunReport, config: &ScenarioConfig, image: &ImageName, min_intervals: usize) -> Check {
    let limit = config.policy.throttle_limit;
    let containers: Vec<&ContainerInfo> = report.containers.iter().filter(|c| &c.image == image).collect();
    if containers.is_empty() {
        return Err(format!("{image} never ran"));
    }
    for c in containers {
        let mut runs = 0;
        let mut inside = false;
        for r in report.rows(&c.container) {
            if r.cpu_limit > c.initial_limits.cpu {
                return Err(format!("{} upscaled to {} at t={}", c.container, r.cpu_limit, r.t));
            }
            let hot = r.cpu_throttle >= limit;
            if hot && !inside {
                runs += 1;
            }
            inside = hot;
        }
        if runs < min_intervals {
            return Err(format!("{}: {runs} throttled intervals", c.container));
        }
    }
    Ok(())
}

fn message_counts(report: &RunReport, analyses: usize, deploy: usize) -> Check {
    let mut problems = Vec::new();
    for (req, _) in report.executors() {
        let a = report.message_count(&req, &[Action::DeploymentAnalysisRequest]);
        let d = report.message_count(&req, &[Action::DeploymentRequest]);
        if a != analyses || d != deploy {
            problems.push(format!("{req}: {a} analyses, {d} deploy messages"));
        }
    }
    if report.executors().is_empty() {
        problems.push("no deployments".into());
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems.join("; "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expectations_round_trip_through_json() {
        let all = vec![
            Expectation::Admissions {
                image: None,
                sequence: vec![Decision { accept: true, target: 150 }],
            },
            Expectation::NoOomKills,
            Expectation::LimitsWithin {
                resource: ResourceKind::Mem,
                lo: 1.0,
                hi: 1.25,
                cycles: 4,
            },
            Expectation::MessageCounts {
                analyses: 1,
                deploy_messages: 2,
            },
        ];
        let text = serde_json::to_string(&all).unwrap();
        assert!(text.contains("\"kind\":\"no_oom_kills\""));
        let back: Vec<Expectation> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, all);
    }

    #[test]
    fn descriptions_are_readable() {
        let e = Expectation::Admissions {
            image: None,
            sequence: vec![
                Decision { accept: true, target: 150 },
                Decision { accept: false, target: 100 },
            ],
        };
        assert_eq!(e.describe(), "admissions: accept(150), reject(100)");
    }
}
