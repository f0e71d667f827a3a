//! Forecasting service: bucketed aggregation of container metrics and an
//! ARIMA(5,1,0) forecast of utilization and throttling.

pub mod arima;

use serde::{Deserialize, Serialize};

use crate::bus::{Body, ContainerForecast, ForecastOutcome, ForecastResponse, Message};
use crate::device::Ctx;
use crate::error::ForecastError;
use crate::model::SimTime;
use crate::monitor::MetricsSeries;

pub use arima::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub horizon: usize,
    pub min_points: usize,
    /// Aggregation bucket length in simulated seconds.
    pub bucket: SimTime,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            p: 5,
            d: 1,
            q: 0,
            horizon: 1,
            min_points: 7,
            bucket: 3600,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let bad = |m: &str| Err(ForecastError::InvalidConfig(m.to_string()));
        if self.d != 1 || self.q != 0 {
            return bad("only ARIMA(p,1,0) models are supported");
        }
        if self.p == 0 {
            return bad("p must be positive");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.min_points < self.p + self.d + 1 {
            return bad("min_points must be at least p + d + 1");
        }
        if self.bucket == 0 {
            return bad("bucket must be positive");
        }
        Ok(())
    }
}

/// Clipping range of a forecast quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub const UTIL: Bounds = Bounds {
        lo: 0.0,
        hi: f64::INFINITY,
    };
    pub const PERCENT: Bounds = Bounds { lo: 0.0, hi: 100.0 };
    pub const NONE: Bounds = Bounds {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub values: Vec<f64>,
    pub method: Method,
}

impl Forecast {
    pub fn is_fallback(&self) -> bool {
        self.method == Method::Fallback
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Forecasts `config.horizon` points after `series`, clipped to `bounds`.
pub fn fit_and_forecast(series: &[f64], config: &ForecastConfig, bounds: Bounds) -> Forecast {
    let (values, method) = arima::forecast(series, config.p, config.horizon, config.min_points);
    Forecast {
        values: values.into_iter().map(|v| v.clamp(bounds.lo, bounds.hi)).collect(),
        method,
    }
}

/// Mean of `(t, value)` samples per bucket, with buckets counted from the
/// first timestamp. A partial trailing bucket yields its own point; empty
/// buckets yield none.
pub fn aggregate(samples: &[(SimTime, f64)], bucket: SimTime) -> Result<Vec<(SimTime, f64)>, ForecastError> {
    let Some(&(t0, _)) = samples.first() else {
        return Err(ForecastError::EmptySeries);
    };
    if samples.windows(2).any(|w| w[0].0 > w[1].0) {
        return Err(ForecastError::NonMonotone);
    }
    let bucket = bucket.max(1);
    let mut out: Vec<(SimTime, f64, usize)> = Vec::new();
    for &(t, v) in samples {
        let start = t0 + (t - t0) / bucket * bucket;
        match out.last_mut() {
            Some(last) if last.0 == start => {
                last.1 += v;
                last.2 += 1;
            }
            _ => out.push((start, v, 1)),
        }
    }
    Ok(out.into_iter().map(|(t, s, n)| (t, s / n as f64)).collect())
}

/// Hourly aggregation as used by default.
pub fn aggregate_hourly(samples: &[(SimTime, f64)]) -> Result<Vec<(SimTime, f64)>, ForecastError> {
    aggregate(samples, 3600)
}

/// Aggregated utilization and throttle series of one container.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregated {
    pub t: Vec<SimTime>,
    pub cpu_util: Vec<f64>,
    pub mem_util: Vec<f64>,
    pub throttle: Vec<f64>,
}

pub fn aggregate_series(series: &MetricsSeries, bucket: SimTime) -> Result<Aggregated, ForecastError> {
    let pick = |f: fn(&crate::monitor::SeriesPoint) -> f64| -> Vec<(SimTime, f64)> {
        series.points().iter().map(|p| (p.t, f(p))).collect()
    };
    let cpu = aggregate(&pick(|p| p.cpu_util), bucket)?;
    let mem = aggregate(&pick(|p| p.mem_util), bucket)?;
    let thr = aggregate(&pick(|p| p.cpu_throttle), bucket)?;
    Ok(Aggregated {
        t: cpu.iter().map(|x| x.0).collect(),
        cpu_util: cpu.into_iter().map(|x| x.1).collect(),
        mem_util: mem.into_iter().map(|x| x.1).collect(),
        throttle: thr.into_iter().map(|x| x.1).collect(),
    })
}

/// Forecasts of one container's three series.
pub fn forecast_container(series: &MetricsSeries, config: &ForecastConfig) -> Result<ForecastOutcome, ForecastError> {
    let agg = aggregate_series(series, config.bucket)?;
    let cpu = fit_and_forecast(&agg.cpu_util, config, Bounds::UTIL);
    let mem = fit_and_forecast(&agg.mem_util, config, Bounds::UTIL);
    let thr = fit_and_forecast(&agg.throttle, config, Bounds::PERCENT);
    Ok(ForecastOutcome::Ok {
        fallback: cpu.is_fallback(),
        cpu_util: cpu.values,
        mem_util: mem.values,
        throttle: thr.values,
    })
}

#[derive(Debug, Clone)]
pub struct Forecaster {
    config: ForecastConfig,
}

impl Forecaster {
    pub fn new(config: ForecastConfig) -> Self {
        Forecaster { config }
    }

    pub fn config(&self) -> &ForecastConfig {
        &self.config
    }

    /// Answers forecast requests; ignores every other message.
    pub fn handle(&mut self, ctx: &mut Ctx<'_>, msg: &Message) {
        let Body::ForecastRequest(req) = &msg.body else {
            return;
        };
        let config = ForecastConfig {
            horizon: req.horizon.max(1),
            ..self.config
        };
        let results = req
            .containers
            .iter()
            .map(|c| {
                let outcome = match ctx.knowledge.series.get(c) {
                    None => ForecastOutcome::Error {
                        error: format!("no metrics for container {c}"),
                    },
                    Some(series) => forecast_container(series, &config).unwrap_or_else(|e| {
                        ForecastOutcome::Error {
                            error: e.to_string(),
                        }
                    }),
                };
                ContainerForecast {
                    container: c.clone(),
                    outcome,
                }
            })
            .collect();
        ctx.bus.send(
            Body::ForecastResponse(ForecastResponse { results }),
            msg.correlation_id.clone(),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::{Bus, ForecastRequest, Topic};
    use crate::events::EventLog;
    use crate::hostsim::{ContainerStatus, HostConfig, HostSim};
    use crate::knowledge::Knowledge;
    use crate::model::{ContainerId, DeviceId, OptimizationPolicy, ResourceAmount};
    use crate::monitor::SeriesPoint;
    use crate::registry::Registry;
    use proptest::prelude::*;

    fn cfg(horizon: usize) -> ForecastConfig {
        ForecastConfig {
            horizon,
            ..ForecastConfig::default()
        }
    }

    #[test]
    fn constant_series_forecasts_constant() {
        let f = fit_and_forecast(&[80.0; 10], &cfg(3), Bounds::UTIL);
        assert_eq!(f.values, vec![80.0, 80.0, 80.0]);
        assert!(!f.is_fallback());
    }

    #[test]
    fn linear_ramp_continues() {
        let y: Vec<f64> = (1..=10).map(|k| 10.0 * k as f64).collect();
        let f = fit_and_forecast(&y, &cfg(2), Bounds::UTIL);
        assert_eq!(f.values, vec![110.0, 120.0]);
        assert_eq!(f.method, Method::Degenerate);
    }

    #[test]
    fn short_history_repeats_last_value() {
        let f = fit_and_forecast(&[1.0, 2.0, 3.0, 4.0], &cfg(3), Bounds::UTIL);
        assert_eq!(f.values, vec![4.0; 3]);
        assert!(f.is_fallback());
    }

    #[test]
    fn throttle_is_clipped_to_percent() {
        let y: Vec<f64> = (0..10).map(|k| 60.0 + 10.0 * k as f64).collect();
        let f = fit_and_forecast(&y, &cfg(4), Bounds::PERCENT);
        assert!(f.values.iter().all(|v| (0.0..=100.0).contains(v)));
        assert_eq!(f.values[3], 100.0);
        let down: Vec<f64> = (0..10).map(|k| 30.0 - 10.0 * k as f64).collect();
        assert_eq!(fit_and_forecast(&down, &cfg(2), Bounds::UTIL).values, vec![0.0, 0.0]);
    }

    #[test]
    fn config_validation() {
        assert!(ForecastConfig::default().validate().is_ok());
        assert!(ForecastConfig { horizon: 0, ..Default::default() }.validate().is_err());
        assert!(ForecastConfig { min_points: 6, ..Default::default() }.validate().is_err());
        assert!(ForecastConfig { q: 1, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn hourly_aggregation() {
        let flat: Vec<_> = (0..3600).map(|t| (t, 50.0)).collect();
        assert_eq!(aggregate_hourly(&flat).unwrap(), vec![(0, 50.0)]);
        let alt: Vec<_> = (0..3600).map(|t| (t, if t % 2 == 0 { 0.0 } else { 100.0 })).collect();
        assert_eq!(aggregate_hourly(&alt).unwrap(), vec![(0, 50.0)]);
        let ninety: Vec<_> = (0..90).map(|m| (m * 60, 1.0)).collect();
        assert_eq!(aggregate_hourly(&ninety).unwrap().len(), 2);
    }

    #[test]
    fn aggregation_errors() {
        assert_eq!(aggregate(&[], 10), Err(ForecastError::EmptySeries));
        assert_eq!(aggregate(&[(5, 1.0), (4, 1.0)], 10), Err(ForecastError::NonMonotone));
    }

    #[test]
    fn buckets_start_at_first_sample() {
        let s = [(30, 1.0), (40, 3.0), (80, 5.0), (95, 7.0)];
        assert_eq!(aggregate(&s, 50).unwrap(), vec![(30, 2.0), (80, 6.0)]);
    }

    fn point(t: u64, v: f64) -> SeriesPoint {
        SeriesPoint {
            t,
            cpu_util: v,
            cpu_limit: ResourceAmount(100),
            cpu_throttle: 0.0,
            mem_util: v,
            mem_peak: v,
            mem_limit: ResourceAmount(100),
            status: ContainerStatus::Running,
        }
    }

    #[test]
    fn handler_answers_every_container_with_same_correlation() {
        let d = DeviceId::new(10, 0, 0, 1);
        let bus = Bus::new(d);
        let sub = bus.subscribe(Topic::Forecast).unwrap();
        let mut host = HostSim::new(d, HostConfig::default());
        let mut knowledge = Knowledge::new();
        let known = ContainerId::new("known").unwrap();
        let mut s = MetricsSeries::new("known", 1000);
        for k in 0..20 {
            s.push(point(k * 10, 40.0));
        }
        knowledge.series.insert(known.clone(), s);
        let registry = Registry::in_memory();
        let mut log = EventLog::new();
        let policy = OptimizationPolicy::default();
        let mut ctx = Ctx {
            now: 0,
            policy: &policy,
            host: &mut host,
            knowledge: &mut knowledge,
            registry: &registry,
            bus: &bus,
            log: &mut log,
        };
        let unknown = ContainerId::new("unknown").unwrap();
        let req = bus.send(
            Body::ForecastRequest(ForecastRequest {
                containers: vec![known.clone(), unknown.clone()],
                horizon: 2,
            }),
            "corr-7",
        );
        let mut f = Forecaster::new(ForecastConfig { bucket: 50, ..Default::default() });
        f.handle(&mut ctx, &req);
        let msgs = sub.drain();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].id, req.id);
        let resp = &msgs[1];
        assert_eq!(resp.correlation_id, "corr-7");
        let Body::ForecastResponse(r) = &resp.body else { panic!() };
        assert_eq!(r.results.len(), 2);
        assert_eq!(
            r.results[0].outcome,
            ForecastOutcome::Ok {
                cpu_util: vec![40.0, 40.0],
                mem_util: vec![40.0, 40.0],
                throttle: vec![0.0, 0.0],
                fallback: true,
            }
        );
        assert!(matches!(r.results[1].outcome, ForecastOutcome::Error { .. }));
    }

    proptest! {
        #[test]
        fn forecasts_have_horizon_length_and_finite_values(
            y in proptest::collection::vec(0.0f64..1000.0, 0..40),
            h in 1usize..12,
        ) {
            let f = fit_and_forecast(&y, &cfg(h), Bounds::UTIL);
            prop_assert_eq!(f.values.len(), h);
            prop_assert!(f.values.iter().all(|v| v.is_finite() && *v >= 0.0));
        }

        #[test]
        fn shift_invariance(y in proptest::collection::vec(0.0f64..100.0, 12..40), c in -50.0f64..50.0) {
            let a = fit_and_forecast(&y, &cfg(3), Bounds::NONE);
            let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
            let b = fit_and_forecast(&shifted, &cfg(3), Bounds::NONE);
            for (x, z) in a.values.iter().zip(&b.values) {
                prop_assert!((x + c - z).abs() <= 1e-6 * (1.0 + x.abs()), "{} vs {}", x + c, z);
            }
        }
    }
}
