//! Scenarios shipped with the binary.

use crate::forecaster::ForecastConfig;
use crate::hostsim::{HostConfig, Pattern, WorkloadClass};
use crate::model::{DeviceId, ImageName, LimitSet, OptimizationPolicy, OwnerId, ResourceAmount, ResourceKind, SimTime};
use crate::monitor::MonitorConfig;
use crate::registry::VendorLimits;

use super::config::{DeviceConfig, ImageConfig, ScenarioConfig, ScheduleEntry};
use super::expect::{Decision, Expectation};
use crate::error::ScenarioError;

pub const PERIOD: SimTime = 300;
pub const BUCKET: SimTime = 50;
/// Two intervals: with one, the first cycle never has enough history for a
/// fit and always keeps the limits.
pub const WARMUP: SimTime = 2 * PERIOD;
/// Local history kept by the monitor; two periods give twelve buckets.
pub const RETENTION: SimTime = 2 * PERIOD;
pub const OWNER: &str = "vendor";

pub const NAMES: [&str; 11] = [
    "exp1_mem",
    "exp1_cpu",
    "exp2_mem",
    "exp2_cpu",
    "exp3_mem",
    "exp3_cpu",
    "exp4_mem_400",
    "exp4_mem_200",
    "exp4_cpu_350",
    "exp4_cpu_100",
    "cluster_3dev",
];

fn owner() -> OwnerId {
    OwnerId::new(OWNER).expect("non-empty")
}

pub fn image_name(class: WorkloadClass, pattern: Pattern) -> ImageName {
    let prefix = match class {
        WorkloadClass::CpuDominant => "cpu",
        WorkloadClass::MemDominant => "memory",
    };
    ImageName::new(format!("{prefix}-{}", pattern.number())).expect("non-empty")
}

fn device(n: u8) -> DeviceId {
    DeviceId::new(10, 0, 0, n)
}

fn image(class: WorkloadClass, pattern: Pattern, request: LimitSet, base: LimitSet) -> ImageConfig {
    ImageConfig {
        owner: owner(),
        name: image_name(class, pattern),
        pattern,
        class,
        peak: None,
        period: None,
        cycles: None,
        limits: VendorLimits::full(request, base),
    }
}

fn mem_image(pattern: Pattern, request: u64, base: u64) -> ImageConfig {
    image(
        WorkloadClass::MemDominant,
        pattern,
        LimitSet::new(100, request),
        LimitSet::new(50, base),
    )
}

fn cpu_image(pattern: Pattern, request: u64, base: u64) -> ImageConfig {
    image(
        WorkloadClass::CpuDominant,
        pattern,
        LimitSet::new(request, 64),
        LimitSet::new(base, 32),
    )
}

fn at(t: SimTime, img: &ImageConfig) -> ScheduleEntry {
    ScheduleEntry {
        at: Some(t),
        after_stable: false,
        device: None,
        owner: img.owner.clone(),
        image: img.name.clone(),
    }
}

fn after_stable(img: &ImageConfig) -> ScheduleEntry {
    ScheduleEntry {
        at: None,
        after_stable: true,
        device: None,
        owner: img.owner.clone(),
        image: img.name.clone(),
    }
}

fn base(name: &str, description: &str, images: Vec<ImageConfig>, duration: SimTime) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        description: description.into(),
        devices: vec![DeviceConfig {
            id: device(1),
            host: HostConfig::default(),
        }],
        schedule: images.iter().map(|i| at(0, i)).collect(),
        images,
        policy: OptimizationPolicy {
            optimization_interval: PERIOD,
            warmup_delay: Some(WARMUP),
            ..OptimizationPolicy::default()
        },
        monitor: MonitorConfig {
            retention: RETENTION,
            ..MonitorConfig::default()
        },
        forecast: ForecastConfig {
            bucket: BUCKET,
            ..ForecastConfig::default()
        },
        workload_period: PERIOD,
        duration,
        seed: 1,
        cluster: None,
        expectations: Vec::new(),
    }
}

fn accept(target: u64) -> Decision {
    Decision { accept: true, target }
}

fn reject(target: u64) -> Decision {
    Decision { accept: false, target }
}

fn reserve(cfg: &mut ScenarioConfig, kind: ResourceKind, avail: u64) {
    let host = &mut cfg.devices[0].host;
    let left = host.total.get(kind).0.saturating_sub(avail);
    host.reserved.set(kind, ResourceAmount(left));
}

fn exp1_mem() -> ScenarioConfig {
    let images = Pattern::ALL.iter().map(|&p| mem_image(p, 150, 100)).collect();
    let mut c = base(
        "exp1_mem",
        "Five memory workloads with well-configured limits of 150/100 MB.",
        images,
        2400,
    );
    c.expectations = vec![
        Expectation::Admissions {
            image: None,
            sequence: vec![accept(150); 5],
        },
        Expectation::NoOomKills,
        Expectation::LimitsWithin {
            resource: ResourceKind::Mem,
            lo: 1.0,
            hi: 1.25,
            cycles: 4,
        },
    ];
    c
}

fn exp1_cpu() -> ScenarioConfig {
    let images = Pattern::ALL.iter().map(|&p| cpu_image(p, 300, 100)).collect();
    let mut c = base(
        "exp1_cpu",
        "Five CPU workloads requesting 300m with a 100m base on a 1000m host.",
        images,
        2400,
    );
    c.expectations = vec![Expectation::Admissions {
        image: None,
        sequence: vec![
            accept(300),
            accept(300),
            accept(300),
            reject(300),
            accept(100),
            reject(300),
            reject(100),
        ],
    }];
    c
}

fn exp2_mem() -> ScenarioConfig {
    let images = Pattern::ALL.iter().map(|&p| mem_image(p, 15, 10)).collect();
    let mut c = base(
        "exp2_mem",
        "Five memory workloads with misconfigured limits of 15/10 MB.",
        images,
        3600,
    );
    c.expectations = vec![
        Expectation::Admissions {
            image: None,
            sequence: vec![accept(15); 5],
        },
        Expectation::OomKillsPerRequest { min: 2 },
        Expectation::EscalationFormula,
        Expectation::AllRunning,
        Expectation::LimitsWithin {
            resource: ResourceKind::Mem,
            lo: 1.0,
            hi: 1.25,
            cycles: 4,
        },
    ];
    c
}

fn exp2_cpu() -> ScenarioConfig {
    let images = Pattern::ALL.iter().map(|&p| cpu_image(p, 100, 50)).collect();
    let mut c = base(
        "exp2_cpu",
        "Five CPU workloads with misconfigured limits of 100m/50m.",
        images,
        3600,
    );
    c.expectations = vec![
        Expectation::Admissions {
            image: None,
            sequence: vec![accept(100); 5],
        },
        Expectation::InitialThrottleFull,
        Expectation::ThrottleBelow { limit: 25.0, cycles: 4 },
        Expectation::BacklogSettles { cycles: 4 },
    ];
    c
}

fn staged(mut c: ScenarioConfig) -> ScenarioConfig {
    let late: Vec<ScheduleEntry> = c.images[2..].iter().map(after_stable).collect();
    c.schedule.truncate(2);
    c.schedule.extend(late);
    c
}

fn exp3_mem() -> ScenarioConfig {
    let images = Pattern::ALL[..4].iter().map(|&p| mem_image(p, 150, 100)).collect();
    let mut c = staged(base(
        "exp3_mem",
        "Memory workloads 3 and 4 join after workloads 1 and 2 settle.",
        images,
        4800,
    ));
    c.expectations = vec![
        Expectation::Admissions {
            image: None,
            sequence: vec![accept(150); 4],
        },
        Expectation::ExistingFirst,
        Expectation::NoOomKills,
        Expectation::LimitsWithin {
            resource: ResourceKind::Mem,
            lo: 1.0,
            hi: 1.25,
            cycles: 4,
        },
    ];
    c
}

fn exp3_cpu() -> ScenarioConfig {
    let images = Pattern::ALL[..4].iter().map(|&p| cpu_image(p, 300, 100)).collect();
    let mut c = staged(base(
        "exp3_cpu",
        "CPU workloads 3 and 4 join after workloads 1 and 2 settle.",
        images,
        4800,
    ));
    c.expectations = vec![
        Expectation::Admissions {
            image: None,
            sequence: vec![accept(300); 4],
        },
        Expectation::ExistingFirst,
        Expectation::ThrottleBelow { limit: 25.0, cycles: 4 },
    ];
    c
}

fn exp4_mem(avail: u64) -> ScenarioConfig {
    let images = Pattern::ALL[..3].iter().map(|&p| mem_image(p, 150, 100)).collect();
    let name = format!("exp4_mem_{avail}");
    let mut c = base(&name, &format!("Memory admissions with {avail} MB available."), images, 2400);
    reserve(&mut c, ResourceKind::Mem, avail);
    let sequence = if avail >= 300 {
        vec![accept(150), accept(150), reject(150), reject(100)]
    } else {
        vec![accept(150), reject(150), reject(100), reject(150), reject(100)]
    };
    c.expectations = vec![Expectation::Admissions { image: None, sequence }];
    c
}

fn exp4_cpu_350() -> ScenarioConfig {
    let images = vec![
        cpu_image(Pattern::ALL[0], 300, 100),
        cpu_image(Pattern::ALL[1], 100, 50),
        cpu_image(Pattern::ALL[2], 100, 50),
    ];
    let mut c = base("exp4_cpu_350", "CPU admissions with 350m available.", images, 2400);
    reserve(&mut c, ResourceKind::Cpu, 350);
    c.expectations = vec![Expectation::Admissions {
        image: None,
        sequence: vec![accept(300), reject(100), reject(50), reject(100), reject(50)],
    }];
    c
}

fn exp4_cpu_100() -> ScenarioConfig {
    let mut img = cpu_image(Pattern::ALL[2], 100, 50);
    img.peak = Some(ResourceAmount(80));
    let name = img.name.clone();
    let mut c = base("exp4_cpu_100", "CPU admission with 100m available.", vec![img], 2400);
    reserve(&mut c, ResourceKind::Cpu, 100);
    c.expectations = vec![
        Expectation::Admissions {
            image: None,
            sequence: vec![reject(100), accept(50)],
        },
        Expectation::ThrottledWithoutUpscale {
            image: name,
            min_intervals: 2,
        },
    ];
    c
}

fn cluster_3dev() -> ScenarioConfig {
    let images: Vec<ImageConfig> = Pattern::ALL[..4].iter().map(|&p| mem_image(p, 150, 100)).collect();
    let mut c = base(
        "cluster_3dev",
        "Three identical devices; four memory requests arrive at device 1.",
        images,
        2400,
    );
    c.devices = (1..=3)
        .map(|n| DeviceConfig {
            id: device(n),
            host: HostConfig::default(),
        })
        .collect();
    c.schedule = c.images.iter().enumerate().map(|(i, img)| at(20 * i as SimTime, img)).collect();
    c.expectations = vec![
        Expectation::Executors {
            sequence: vec![device(1), device(2), device(3), device(1)],
        },
        Expectation::MessageCounts {
            analyses: 1,
            deploy_messages: 2,
        },
        Expectation::NoOomKills,
    ];
    c
}

pub fn builtin(name: &str) -> Result<ScenarioConfig, ScenarioError> {
    Ok(match name {
        "exp1_mem" => exp1_mem(),
        "exp1_cpu" => exp1_cpu(),
        "exp2_mem" => exp2_mem(),
        "exp2_cpu" => exp2_cpu(),
        "exp3_mem" => exp3_mem(),
        "exp3_cpu" => exp3_cpu(),
        "exp4_mem_400" => exp4_mem(400),
        "exp4_mem_200" => exp4_mem(200),
        "exp4_cpu_350" => exp4_cpu_350(),
        "exp4_cpu_100" => exp4_cpu_100(),
        "cluster_3dev" => cluster_3dev(),
        other => return Err(ScenarioError::UnknownBuiltin(other.to_string())),
    })
}

pub fn builtin_scenarios() -> Vec<ScenarioConfig> {
    NAMES.iter().map(|n| builtin(n).expect("listed")).collect()
}
