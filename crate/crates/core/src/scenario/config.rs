use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::forecaster::ForecastConfig;
use crate::hostsim::{HostConfig, Pattern, WorkloadClass, WorkloadSpec};
use crate::model::{DeviceId, ImageName, OptimizationPolicy, OwnerId, ResourceAmount, ResourceKind, SimTime};
use crate::monitor::MonitorConfig;
use crate::registry::VendorLimits;

use super::expect::Expectation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub id: DeviceId,
    #[serde(default)]
    pub host: HostConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageConfig {
    pub owner: OwnerId,
    pub name: ImageName,
    pub pattern: Pattern,
    pub class: WorkloadClass,
    /// Defaults to the standard peak of the pattern and class.
    #[serde(default)]
    pub peak: Option<ResourceAmount>,
    /// Defaults to the scenario's workload period.
    #[serde(default)]
    pub period: Option<SimTime>,
    #[serde(default)]
    pub cycles: Option<u32>,
    #[serde(default)]
    pub limits: VendorLimits,
}

impl ImageConfig {
    pub fn spec(&self, default_period: SimTime, seed: u64) -> WorkloadSpec {
        WorkloadSpec {
            pattern: self.pattern,
            class: self.class,
            period: self.period.unwrap_or(default_period),
            peak: self.peak.unwrap_or_else(|| self.class.peak_of(self.pattern)),
            seed,
            cycles: self.cycles,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    /// Fixed submission time.
    #[serde(default)]
    pub at: Option<SimTime>,
    /// Submit once every running container has kept its limits for two
    /// consecutive optimization cycles.
    #[serde(default)]
    pub after_stable: bool,
    /// Device receiving the request; the first device when absent.
    #[serde(default)]
    pub device: Option<DeviceId>,
    pub owner: OwnerId,
    pub image: ImageName,
}

fn default_period() -> SimTime {
    3600
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub devices: Vec<DeviceConfig>,
    pub images: Vec<ImageConfig>,
    pub schedule: Vec<ScheduleEntry>,
    #[serde(default)]
    pub policy: OptimizationPolicy,
    #[serde(default)]
    pub monitor: MonitorConfig,
    /// The horizon is raised to cover at least one optimization interval.
    #[serde(default)]
    pub forecast: ForecastConfig,
    #[serde(default = "default_period")]
    pub workload_period: SimTime,
    pub duration: SimTime,
    #[serde(default)]
    pub seed: u64,
    /// Bridge all devices into one cluster. Defaults to true for more than
    /// one device.
    #[serde(default)]
    pub cluster: Option<bool>,
    #[serde(default)]
    pub expectations: Vec<Expectation>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn clustered(&self) -> bool {
        self.cluster.unwrap_or(self.devices.len() > 1)
    }

    /// Forecast settings with the horizon covering one optimization interval.
    pub fn effective_forecast(&self) -> ForecastConfig {
        let bucket = self.forecast.bucket.max(1);
        let cover = self.policy.optimization_interval.div_ceil(bucket) as usize;
        ForecastConfig {
            horizon: self.forecast.horizon.max(cover).max(1),
            ..self.forecast
        }
    }

    pub fn image(&self, owner: &OwnerId, name: &ImageName) -> Option<&ImageConfig> {
        self.images.iter().find(|i| &i.owner == owner && &i.name == name)
    }

    /// Dominant resource of the scenario's first image.
    pub fn dominant(&self) -> Option<ResourceKind> {
        self.images.first().map(|i| i.class.dominant())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.name.trim().is_empty() {
            return bad("name must not be empty".into());
        }
        if self.devices.is_empty() {
            return bad("at least one device is required".into());
        }
        for (i, d) in self.devices.iter().enumerate() {
            if self.devices[..i].iter().any(|o| o.id == d.id) {
                return bad(format!("duplicate device {}", d.id));
            }
            if !d.host.total.is_nonzero() {
                return bad(format!("device {} has no capacity", d.id));
            }
            if !d.host.reserved.fits_within(&d.host.total) {
                return bad(format!("device {} reserves more than its capacity", d.id));
            }
        }
        if self.devices.len() > 1 && !self.clustered() {
            return bad("several devices require cluster bridging".into());
        }
        self.policy.validate()?;
        self.effective_forecast()
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if self.monitor.scrape_interval == 0 {
            return bad("scrape_interval must be positive".into());
        }
        if self.duration == 0 {
            return bad("duration must be positive".into());
        }
        for (i, img) in self.images.iter().enumerate() {
            if self.images[..i]
                .iter()
                .any(|o| o.owner == img.owner && o.name == img.name)
            {
                return bad(format!("duplicate image {}/{}", img.owner, img.name));
            }
            img.spec(self.workload_period, 0)
                .validate()
                .map_err(|e| ScenarioError::Invalid(format!("image {}: {e}", img.name)))?;
        }
        for s in &self.schedule {
            match (s.at, s.after_stable) {
                (Some(at), false) if at < self.duration => {}
                (Some(at), false) => return bad(format!("request for {} at {at} is past the end", s.image)),
                (None, true) => {}
                _ => return bad(format!("request for {} needs exactly one of at/after_stable", s.image)),
            }
            if let Some(d) = s.device {
                if !self.devices.iter().any(|x| x.id == d) {
                    return bad(format!("unknown device {d}"));
                }
            }
            if self.image(&s.owner, &s.image).is_none() {
                return bad(format!("unknown image {}/{}", s.owner, s.image));
            }
        }
        Ok(())
    }
}
