//! Declarative scenarios, the simulation driver and run reports.

pub mod builtin;
pub mod config;
pub mod expect;
pub mod report;
pub mod runner;

pub use builtin::{builtin, builtin_scenarios, NAMES as BUILTIN_NAMES};
pub use config::{DeviceConfig, ImageConfig, ScenarioConfig, ScheduleEntry};
pub use expect::{Decision, Expectation, ExpectationResult};
pub use report::{emit_traces, ContainerInfo, RequestInfo, RunReport, Summary, TraceRow, CSV_HEADER};
pub use runner::{run, Simulation};
