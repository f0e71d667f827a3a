//! One edge device: host, bus, shared knowledge and the four components.

use crate::analyzer::Analyzer;
use crate::bus::{Bus, Subscription, Topic};
use crate::deployer::Deployer;
use crate::error::BusError;
use crate::events::{EventKind, EventLog};
use crate::forecaster::{ForecastConfig, Forecaster};
use crate::hostsim::{HostConfig, HostEvent, HostSim};
use crate::knowledge::Knowledge;
use crate::model::{DeviceId, OptimizationPolicy, SimTime};
use crate::monitor::{Monitor, MonitorConfig};
use crate::registry::Registry;

/// Borrowed view of a device handed to component handlers.
pub struct Ctx<'a> {
    pub now: SimTime,
    pub policy: &'a OptimizationPolicy,
    pub host: &'a mut HostSim,
    pub knowledge: &'a mut Knowledge,
    pub registry: &'a Registry,
    pub bus: &'a Bus,
    pub log: &'a mut EventLog,
}

impl Ctx<'_> {
    pub fn device(&self) -> DeviceId {
        self.host.device()
    }

    pub fn record(&mut self, kind: EventKind) {
        let (t, d) = (self.now, self.device());
        self.log.push(t, d, kind);
    }
}

struct Inboxes {
    deployer: Vec<Subscription>,
    analyzer: Vec<Subscription>,
    forecaster: Subscription,
}

pub struct Device {
    pub host: HostSim,
    pub knowledge: Knowledge,
    pub bus: Bus,
    pub policy: OptimizationPolicy,
    pub monitor: Monitor,
    pub deployer: Deployer,
    pub analyzer: Analyzer,
    pub forecaster: Forecaster,
    inboxes: Inboxes,
}

impl Device {
    pub fn new(
        id: DeviceId,
        host: HostConfig,
        policy: OptimizationPolicy,
        monitor: MonitorConfig,
        forecast: ForecastConfig,
        clustered: bool,
    ) -> Result<Self, BusError> {
        let bus = if clustered {
            Bus::with_bridging(id)
        } else {
            Bus::new(id)
        };
        let mut deployer = vec![bus.subscribe(Topic::Deploy)?, bus.subscribe(Topic::Monitor)?];
        if clustered {
            deployer.push(bus.subscribe(Topic::ClusterDeploy)?);
            deployer.push(bus.subscribe(Topic::ClusterMonitor)?);
        }
        let inboxes = Inboxes {
            deployer,
            analyzer: vec![bus.subscribe(Topic::Analyze)?, bus.subscribe(Topic::Forecast)?],
            forecaster: bus.subscribe(Topic::Forecast)?,
        };
        Ok(Device {
            host: HostSim::new(id, host),
            knowledge: Knowledge::new(),
            bus,
            policy,
            monitor: Monitor::new(monitor),
            deployer: Deployer::new(),
            analyzer: Analyzer::new(forecast.horizon),
            forecaster: Forecaster::new(forecast),
            inboxes,
        })
    }

    pub fn id(&self) -> DeviceId {
        self.host.device()
    }

    fn parts<'a>(
        &'a mut self,
        registry: &'a Registry,
        log: &'a mut EventLog,
    ) -> (Ctx<'a>, &'a mut Monitor, &'a mut Deployer, &'a mut Analyzer, &'a mut Forecaster, &'a Inboxes) {
        let ctx = Ctx {
            now: self.host.now(),
            policy: &self.policy,
            host: &mut self.host,
            knowledge: &mut self.knowledge,
            registry,
            bus: &self.bus,
            log,
        };
        (
            ctx,
            &mut self.monitor,
            &mut self.deployer,
            &mut self.analyzer,
            &mut self.forecaster,
            &self.inboxes,
        )
    }

    /// Runs `f` with a context and the monitor.
    pub fn with_monitor<R>(
        &mut self,
        registry: &Registry,
        log: &mut EventLog,
        f: impl FnOnce(&mut Monitor, &mut Ctx<'_>) -> R,
    ) -> R {
        let (mut ctx, monitor, ..) = self.parts(registry, log);
        f(monitor, &mut ctx)
    }

    /// Runs `f` with a context and the deployer.
    pub fn with_deployer<R>(
        &mut self,
        registry: &Registry,
        log: &mut EventLog,
        f: impl FnOnce(&mut Deployer, &mut Ctx<'_>) -> R,
    ) -> R {
        let (mut ctx, _, deployer, ..) = self.parts(registry, log);
        f(deployer, &mut ctx)
    }

    /// Delivers queued messages to the components once. Returns the number
    /// of messages handled.
    pub fn pump_once(&mut self, registry: &Registry, log: &mut EventLog) -> usize {
        let (mut ctx, _, deployer, analyzer, forecaster, inboxes) = self.parts(registry, log);
        let mut handled = 0;
        for sub in &inboxes.deployer {
            for msg in sub.drain() {
                handled += 1;
                deployer.handle(&mut ctx, sub.topic(), &msg);
            }
        }
        for sub in &inboxes.analyzer {
            for msg in sub.drain() {
                handled += 1;
                analyzer.handle(&mut ctx, &msg);
            }
        }
        for msg in inboxes.forecaster.drain() {
            handled += 1;
            forecaster.handle(&mut ctx, &msg);
        }
        handled
    }

    /// Advances the host by one tick and lets the monitor react to exits.
    pub fn tick(&mut self, registry: &Registry, log: &mut EventLog) -> Vec<HostEvent> {
        let events = self.host.tick();
        if !events.is_empty() {
            let (mut ctx, monitor, ..) = self.parts(registry, log);
            monitor.detect_premature_exit(&mut ctx, &events);
        }
        events
    }
}

/// Delivers messages on every device until no device has pending input.
pub fn pump_all(devices: &mut [Device], registry: &Registry, log: &mut EventLog) -> usize {
    let mut total = 0;
    loop {
        let mut round = 0;
        for d in devices.iter_mut() {
            round += d.pump_once(registry, log);
        }
        if round == 0 {
            return total;
        }
        total += round;
    }
}
