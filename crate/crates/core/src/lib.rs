//! Decentralized deployment and vertical scaling of containers on edge
//! devices, simulated in discrete time.

pub mod analyzer;
pub mod bus;
pub mod deployer;
pub mod device;
pub mod error;
pub mod events;
pub mod forecaster;
pub mod hostsim;
pub mod ingress;
pub mod knowledge;
pub mod model;
pub mod monitor;
pub mod registry;
pub mod scenario;

pub use error::{BusError, ForecastError, HostError, ModelError, RegistryError, ScenarioError};
pub use events::{Event, EventKind, EventLog};
pub use model::{
    ContainerId, DeviceId, ImageName, LimitDelta, LimitRole, LimitSet, OptimizationPolicy, OwnerId, ResourceAmount,
    ResourceKind, SimTime,
};
pub use registry::{ContentHash, ImageBlob, Registry, VendorLimits};
pub use scenario::{builtin, builtin_scenarios, run, RunReport, ScenarioConfig, Simulation};
