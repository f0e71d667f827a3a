//! Synthetic workload generators: five periodic demand shapes, each in a
//! cpu-dominant and a memory-dominant flavour.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{LimitSet, ResourceAmount, ResourceKind, SimTime};

/// Demand of the non-dominant resource, held constant.
pub const IDLE_CPU: u64 = 10;
pub const IDLE_MEM: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Pattern {
    /// Slow triangular rise from half of the peak to the peak and back.
    SlowRiseFall = 1,
    /// Abrupt jumps between 20% and 100% of the peak.
    Drastic = 2,
    /// Square wave: peak for the first half, 10% for the second.
    OnOff = 3,
    /// Small seeded jitter just below the peak.
    GentleShake = 4,
    /// Piecewise trace shaped like a daily profile.
    RealWorld = 5,
}

impl Pattern {
    pub const ALL: [Pattern; 5] = [
        Pattern::SlowRiseFall,
        Pattern::Drastic,
        Pattern::OnOff,
        Pattern::GentleShake,
        Pattern::RealWorld,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Pattern {
    type Error = String;
    fn try_from(n: u8) -> Result<Self, Self::Error> {
        Pattern::ALL
            .into_iter()
            .find(|p| p.number() == n)
            .ok_or_else(|| format!("workload pattern must be 1..=5, got {n}"))
    }
}

impl From<Pattern> for u8 {
    fn from(p: Pattern) -> u8 {
        p.number()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WorkloadClass {
    #[serde(rename = "cpu")]
    CpuDominant,
    #[serde(rename = "mem")]
    MemDominant,
}

impl WorkloadClass {
    pub fn dominant(self) -> ResourceKind {
        match self {
            WorkloadClass::CpuDominant => ResourceKind::Cpu,
            WorkloadClass::MemDominant => ResourceKind::Mem,
        }
    }

    /// Label prefix used for the built-in images, e.g. `Memory 3`.
    pub fn label(self) -> &'static str {
        match self {
            WorkloadClass::CpuDominant => "CPU",
            WorkloadClass::MemDominant => "Memory",
        }
    }

    /// Peak demand of each pattern, in mCPU or MB.
    pub fn peak_of(self, pattern: Pattern) -> ResourceAmount {
        let peaks: [u64; 5] = match self {
            WorkloadClass::MemDominant => [95, 95, 95, 80, 95],
            WorkloadClass::CpuDominant => [150, 150, 150, 120, 140],
        };
        ResourceAmount(peaks[pattern.number() as usize - 1])
    }
}

impl fmt::Display for WorkloadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorkloadClass::CpuDominant => "cpu",
            WorkloadClass::MemDominant => "mem",
        })
    }
}

pub const DEFAULT_PERIOD: SimTime = 3600;

fn default_period() -> SimTime {
    DEFAULT_PERIOD
}

/// Definition of a synthetic workload; shipped as the payload of an image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub pattern: Pattern,
    pub class: WorkloadClass,
    #[serde(default = "default_period")]
    pub period: SimTime,
    pub peak: ResourceAmount,
    #[serde(default)]
    pub seed: u64,
    /// Stop after this many periods; runs forever when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycles: Option<u32>,
}

impl WorkloadSpec {
    /// The workload with the standard peak for its pattern and class.
    pub fn standard(pattern: Pattern, class: WorkloadClass, period: SimTime) -> Self {
        WorkloadSpec {
            pattern,
            class,
            period,
            peak: class.peak_of(pattern),
            seed: 0,
            cycles: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn label(&self) -> String {
        format!("{} {}", self.class.label(), self.pattern.number())
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.period == 0 {
            return Err("workload period must be positive".into());
        }
        if self.peak.0 == 0 {
            return Err("workload peak must be positive".into());
        }
        Ok(())
    }
}

// Breakpoints of the daily-profile trace as (phase fraction, fraction of peak).
const REAL_WORLD: [(f64, f64); 7] = [
    (0.0, 0.60),
    (0.10, 0.75),
    (0.25, 0.45),
    (0.40, 0.70),
    (0.50, 1.00),
    (0.85, 1.00),
    (1.00, 0.60),
];

fn fraction(pattern: Pattern, x: f64, jitter: f64) -> f64 {
    match pattern {
        Pattern::SlowRiseFall => 0.5 + 0.5 * (1.0 - (2.0 * x - 1.0).abs()),
        Pattern::Drastic => {
            if x < 1.0 / 3.0 {
                0.2
            } else if x < 2.0 / 3.0 {
                1.0
            } else if x < 5.0 / 6.0 {
                0.2
            } else {
                1.0
            }
        }
        Pattern::OnOff => {
            if x < 0.5 {
                1.0
            } else {
                0.1
            }
        }
        Pattern::GentleShake => 1.0 - 0.1 * jitter,
        Pattern::RealWorld => {
            let i = REAL_WORLD
                .windows(2)
                .position(|w| x < w[1].0)
                .unwrap_or(REAL_WORLD.len() - 2);
            let (x0, y0) = REAL_WORLD[i];
            let (x1, y1) = REAL_WORLD[i + 1];
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        }
    }
}

/// A ready-to-sample workload; jitter for the shaking pattern is drawn once
/// per phase second from a seeded generator, so demand is periodic.
#[derive(Debug, Clone)]
pub struct Workload {
    spec: WorkloadSpec,
    jitter: Vec<f64>,
}

impl Workload {
    pub fn new(spec: WorkloadSpec) -> Self {
        let jitter = if spec.pattern == Pattern::GentleShake {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            (0..spec.period.max(1)).map(|_| rng.gen::<f64>()).collect()
        } else {
            Vec::new()
        };
        Workload { spec, jitter }
    }

    pub fn spec(&self) -> &WorkloadSpec {
        &self.spec
    }

    /// Demand of the dominant resource at time `t` since start.
    pub fn dominant_demand(&self, t: SimTime) -> ResourceAmount {
        let period = self.spec.period.max(1);
        let phase = t % period;
        let x = phase as f64 / period as f64;
        let jitter = self.jitter.get(phase as usize).copied().unwrap_or(0.0);
        let v = self.spec.peak.as_f64() * fraction(self.spec.pattern, x, jitter);
        ResourceAmount(v.round().max(0.0) as u64)
    }

    /// Demand for both resources at time `t` since start.
    pub fn demand(&self, t: SimTime) -> LimitSet {
        let d = self.dominant_demand(t);
        match self.spec.class {
            WorkloadClass::CpuDominant => LimitSet {
                cpu: d,
                mem: ResourceAmount(IDLE_MEM),
            },
            WorkloadClass::MemDominant => LimitSet {
                cpu: ResourceAmount(IDLE_CPU),
                mem: d,
            },
        }
    }

    /// True once a finite workload has completed all of its cycles.
    pub fn finished(&self, t: SimTime) -> bool {
        self.spec
            .cycles
            .is_some_and(|c| t >= u64::from(c) * self.spec.period)
    }
}

/// Dominant-resource demand of a standard workload at time `t`.
pub fn workload(pattern: Pattern, class: WorkloadClass, period: SimTime, t: SimTime) -> ResourceAmount {
    Workload::new(WorkloadSpec::standard(pattern, class, period)).dominant_demand(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const P: SimTime = 300;

    #[test]
    fn on_phase_of_memory_on_off_hits_peak() {
        assert_eq!(workload(Pattern::OnOff, WorkloadClass::MemDominant, P, 10).0, 95);
        assert_eq!(workload(Pattern::OnOff, WorkloadClass::MemDominant, P, 200).0, 10);
    }

    #[test]
    fn shaking_cpu_stays_within_ten_percent_of_peak() {
        for seed in 0..20 {
            let w = Workload::new(
                WorkloadSpec::standard(Pattern::GentleShake, WorkloadClass::CpuDominant, P)
                    .with_seed(seed),
            );
            for t in 0..P {
                let d = w.dominant_demand(t).0;
                assert!((108..=132).contains(&d), "seed {seed} t {t}: {d}");
            }
        }
    }

    #[test]
    fn maxima_equal_the_standard_peaks() {
        for class in [WorkloadClass::CpuDominant, WorkloadClass::MemDominant] {
            for p in Pattern::ALL {
                let w = Workload::new(WorkloadSpec::standard(p, class, P));
                let max = (0..P).map(|t| w.dominant_demand(t)).max().unwrap();
                assert_eq!(max, class.peak_of(p), "{class} {p:?}");
            }
        }
    }

    #[test]
    fn phase_zero_levels() {
        let m = |p| workload(p, WorkloadClass::MemDominant, P, 0).0;
        assert_eq!(m(Pattern::SlowRiseFall), 48);
        assert_eq!(m(Pattern::Drastic), 19);
        assert_eq!(m(Pattern::OnOff), 95);
        assert_eq!(m(Pattern::RealWorld), 57);
    }

    #[test]
    fn non_dominant_resource_is_idle() {
        let w = Workload::new(WorkloadSpec::standard(
            Pattern::OnOff,
            WorkloadClass::CpuDominant,
            P,
        ));
        assert_eq!(w.demand(0), LimitSet::new(150, IDLE_MEM));
    }

    #[test]
    fn finite_workloads_finish() {
        let mut spec = WorkloadSpec::standard(Pattern::OnOff, WorkloadClass::CpuDominant, P);
        spec.cycles = Some(2);
        let w = Workload::new(spec);
        assert!(!w.finished(599));
        assert!(w.finished(600));
    }

    #[test]
    fn pattern_numbers_round_trip_through_json() {
        let spec = WorkloadSpec::standard(Pattern::RealWorld, WorkloadClass::MemDominant, P);
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"pattern\":5"));
        assert!(json.contains("\"class\":\"mem\""));
        assert_eq!(serde_json::from_str::<WorkloadSpec>(&json).unwrap(), spec);
        assert!(serde_json::from_str::<Pattern>("6").is_err());
    }

    proptest! {
        #[test]
        fn demand_is_periodic(p in 1u8..=5, cpu in any::<bool>(), period in 1u64..2000, t in 0u64..100_000, seed in any::<u64>()) {
            let class = if cpu { WorkloadClass::CpuDominant } else { WorkloadClass::MemDominant };
            let spec = WorkloadSpec::standard(Pattern::try_from(p).unwrap(), class, period).with_seed(seed);
            let w = Workload::new(spec);
            prop_assert_eq!(w.demand(t), w.demand(t + period));
            prop_assert!(w.dominant_demand(t) <= class.peak_of(Pattern::try_from(p).unwrap()));
        }
    }
}
