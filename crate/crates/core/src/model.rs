//! Shared domain vocabulary: resource kinds and amounts, limit sets,
//! optimization policy and identifiers.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Simulated time in whole seconds since the start of a run.
pub type SimTime = u64;

/// The two resource kinds every limit and metric is keyed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceKind {
    Cpu,
    Mem,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 2] = [ResourceKind::Cpu, ResourceKind::Mem];

    pub fn other(self) -> ResourceKind {
        match self {
            ResourceKind::Cpu => ResourceKind::Mem,
            ResourceKind::Mem => ResourceKind::Cpu,
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            ResourceKind::Cpu => "mCPU",
            ResourceKind::Mem => "MB",
        }
    }
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResourceKind::Cpu => f.write_str("cpu"),
            ResourceKind::Mem => f.write_str("mem"),
        }
    }
}

/// A non-negative amount of one resource: mCPU for cpu, MB for memory.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ResourceAmount(pub u64);

impl ResourceAmount {
    pub const ZERO: ResourceAmount = ResourceAmount(0);

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn checked_add(self, rhs: ResourceAmount) -> Option<ResourceAmount> {
        self.0.checked_add(rhs.0).map(ResourceAmount)
    }

    pub fn checked_sub(self, rhs: ResourceAmount) -> Option<ResourceAmount> {
        self.0.checked_sub(rhs.0).map(ResourceAmount)
    }

    pub fn saturating_sub(self, rhs: ResourceAmount) -> ResourceAmount {
        ResourceAmount(self.0.saturating_sub(rhs.0))
    }

    /// Applies a signed delta, failing instead of wrapping below zero.
    pub fn offset(self, delta: i64) -> Option<ResourceAmount> {
        let v = i128::from(self.0) + i128::from(delta);
        u64::try_from(v).ok().map(ResourceAmount)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    /// Rounds a non-negative float up to the next whole unit, ignoring
    /// representation error below 1e-9.
    pub fn from_f64_ceil(v: f64) -> ResourceAmount {
        if v.is_finite() && v > 0.0 {
            ResourceAmount((v - 1e-9).ceil().max(0.0) as u64)
        } else {
            ResourceAmount::ZERO
        }
    }
}

impl fmt::Display for ResourceAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which role a limit set plays for a container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitRole {
    Request,
    Base,
    Current,
    Target,
    Escalated,
}

impl fmt::Display for LimitRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LimitRole::Request => "request",
            LimitRole::Base => "base",
            LimitRole::Current => "current",
            LimitRole::Target => "target",
            LimitRole::Escalated => "escalated",
        };
        f.write_str(s)
    }
}

/// Per-resource amounts. Always covers both kinds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LimitSet {
    pub cpu: ResourceAmount,
    pub mem: ResourceAmount,
}

impl LimitSet {
    pub const ZERO: LimitSet = LimitSet {
        cpu: ResourceAmount::ZERO,
        mem: ResourceAmount::ZERO,
    };

    pub fn new(cpu: u64, mem: u64) -> Self {
        LimitSet {
            cpu: ResourceAmount(cpu),
            mem: ResourceAmount(mem),
        }
    }

    pub fn get(&self, kind: ResourceKind) -> ResourceAmount {
        match kind {
            ResourceKind::Cpu => self.cpu,
            ResourceKind::Mem => self.mem,
        }
    }

    pub fn set(&mut self, kind: ResourceKind, amount: ResourceAmount) {
        match kind {
            ResourceKind::Cpu => self.cpu = amount,
            ResourceKind::Mem => self.mem = amount,
        }
    }

    pub fn with(mut self, kind: ResourceKind, amount: ResourceAmount) -> Self {
        self.set(kind, amount);
        self
    }

    /// True when every amount is at most the paired amount in `other`.
    pub fn fits_within(&self, other: &LimitSet) -> bool {
        ResourceKind::ALL
            .iter()
            .all(|&k| self.get(k) <= other.get(k))
    }

    pub fn is_nonzero(&self) -> bool {
        self.cpu.0 > 0 && self.mem.0 > 0
    }

    pub fn checked_add(&self, other: &LimitSet) -> Option<LimitSet> {
        Some(LimitSet {
            cpu: self.cpu.checked_add(other.cpu)?,
            mem: self.mem.checked_add(other.mem)?,
        })
    }
}

impl fmt::Display for LimitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{cpu:{}m, mem:{}MB}}", self.cpu, self.mem)
    }
}

/// A sparse, per-kind limit map as used by contract-level operations that
/// may receive partial sets (e.g. vendor metadata covering only memory).
pub type PartialLimits = BTreeMap<ResourceKind, ResourceAmount>;

/// Signed per-resource difference between two limit sets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LimitDelta {
    pub cpu: i64,
    pub mem: i64,
}

impl LimitDelta {
    pub fn get(&self, kind: ResourceKind) -> i64 {
        match kind {
            ResourceKind::Cpu => self.cpu,
            ResourceKind::Mem => self.mem,
        }
    }

    pub fn set(&mut self, kind: ResourceKind, v: i64) {
        match kind {
            ResourceKind::Cpu => self.cpu = v,
            ResourceKind::Mem => self.mem = v,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.cpu == 0 && self.mem == 0
    }
}

impl std::ops::Neg for LimitDelta {
    type Output = LimitDelta;
    fn neg(self) -> LimitDelta {
        LimitDelta {
            cpu: -self.cpu,
            mem: -self.mem,
        }
    }
}

fn signed(a: ResourceAmount) -> i64 {
    i64::try_from(a.0).unwrap_or(i64::MAX)
}

/// `target − current` per resource kind.
pub fn delta_limit(target: &LimitSet, current: &LimitSet) -> LimitDelta {
    LimitDelta {
        cpu: signed(target.cpu) - signed(current.cpu),
        mem: signed(target.mem) - signed(current.mem),
    }
}

/// Delta over sparse limit maps; both maps must cover the same kinds.
pub fn delta_partial(
    target: &PartialLimits,
    current: &PartialLimits,
) -> Result<BTreeMap<ResourceKind, i64>, ModelError> {
    if target.keys().ne(current.keys()) {
        return Err(ModelError::MismatchedKinds);
    }
    Ok(target
        .iter()
        .map(|(k, t)| (*k, signed(*t) - signed(current[k])))
        .collect())
}

/// Bounds `value` to `[lo, hi]`.
pub fn clamp(
    value: ResourceAmount,
    lo: ResourceAmount,
    hi: ResourceAmount,
) -> Result<ResourceAmount, ModelError> {
    if lo > hi {
        return Err(ModelError::InvertedBounds { lo: lo.0, hi: hi.0 });
    }
    Ok(value.max(lo).min(hi))
}

/// Per-resource scale steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleSteps {
    pub cpu: ResourceAmount,
    pub mem: ResourceAmount,
}

impl ScaleSteps {
    pub fn get(&self, kind: ResourceKind) -> ResourceAmount {
        match kind {
            ResourceKind::Cpu => self.cpu,
            ResourceKind::Mem => self.mem,
        }
    }
}

/// Knobs of the optimization loop. Durations are in simulated seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizationPolicy {
    pub scale_up: ScaleSteps,
    pub scale_down: ScaleSteps,
    pub buffer_cpu: f64,
    pub mem_margin: f64,
    /// Throttle percentage above which a downscale turns into a minor upscale.
    pub throttle_limit: f64,
    pub mem_min: ResourceAmount,
    /// `None` means half of the host's total memory.
    pub mem_max: Option<ResourceAmount>,
    pub optimization_interval: SimTime,
    /// `None` means one optimization interval.
    pub warmup_delay: Option<SimTime>,
    /// Limits applied when a vendor omits them.
    pub default_request: LimitSet,
    pub default_base: LimitSet,
    /// Capacity held back from predicted availability.
    pub reserve: LimitSet,
    pub max_attempts: u32,
}

impl Default for OptimizationPolicy {
    fn default() -> Self {
        OptimizationPolicy {
            scale_up: ScaleSteps {
                cpu: ResourceAmount(50),
                mem: ResourceAmount(20),
            },
            scale_down: ScaleSteps {
                cpu: ResourceAmount(100),
                mem: ResourceAmount(20),
            },
            buffer_cpu: 1.10,
            mem_margin: 1.10,
            throttle_limit: 25.0,
            mem_min: ResourceAmount(32),
            mem_max: None,
            optimization_interval: 300,
            warmup_delay: None,
            default_request: LimitSet::new(200, 128),
            default_base: LimitSet::new(100, 64),
            reserve: LimitSet::ZERO,
            max_attempts: 10,
        }
    }
}

impl OptimizationPolicy {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |what: &str| Err(ModelError::InvalidPolicy(what.to_string()));
        if self.buffer_cpu.is_nan() || self.buffer_cpu <= 1.0 {
            return bad("buffer_cpu must be greater than 1");
        }
        if self.mem_margin.is_nan() || self.mem_margin < 1.0 {
            return bad("mem_margin must be at least 1");
        }
        if !(0.0..=100.0).contains(&self.throttle_limit) {
            return bad("throttle_limit must lie in [0, 100]");
        }
        if let Some(max) = self.mem_max {
            if self.mem_min > max {
                return bad("mem_min exceeds mem_max");
            }
        }
        for k in ResourceKind::ALL {
            if self.scale_up.get(k).0 == 0 || self.scale_down.get(k).0 == 0 {
                return bad("scale amounts must be positive");
            }
        }
        if self.optimization_interval == 0 {
            return bad("optimization_interval must be positive");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive");
        }
        if !self.default_base.fits_within(&self.default_request) {
            return bad("default base limits exceed default request limits");
        }
        Ok(())
    }

    pub fn warmup(&self) -> SimTime {
        self.warmup_delay.unwrap_or(self.optimization_interval)
    }

    pub fn mem_ceiling(&self, host_total_mem: ResourceAmount) -> ResourceAmount {
        self.mem_max
            .unwrap_or(ResourceAmount(host_total_mem.0 / 2))
            .max(self.mem_min)
    }
}

/// A device address; ordered by numeric value of the IPv4 address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DeviceId(Ipv4Addr);

impl DeviceId {
    pub fn new(a: u8, b: u8, c: u8, d: u8) -> Self {
        DeviceId(Ipv4Addr::new(a, b, c, d))
    }

    pub fn addr(&self) -> Ipv4Addr {
        self.0
    }
}

impl Ord for DeviceId {
    fn cmp(&self, other: &Self) -> Ordering {
        u32::from(self.0).cmp(&u32::from(other.0))
    }
}

impl PartialOrd for DeviceId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl FromStr for DeviceId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<Ipv4Addr>()
            .map(DeviceId)
            .map_err(|_| ModelError::InvalidDeviceId(s.to_string()))
    }
}

impl TryFrom<String> for DeviceId {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<DeviceId> for String {
    fn from(d: DeviceId) -> String {
        d.to_string()
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Result<Self, ModelError> {
                let s = s.into();
                if s.is_empty() {
                    return Err(ModelError::EmptyIdentifier(stringify!($name)));
                }
                Ok($name(s))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = ModelError;
            fn try_from(s: String) -> Result<Self, Self::Error> {
                $name::new(s)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl FromStr for $name {
            type Err = ModelError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $name::new(s)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

string_id!(
    /// Identifies one container incarnation on one host.
    ContainerId
);
string_id!(
    /// Account that publishes images to the registry.
    OwnerId
);
string_id!(ImageName);
