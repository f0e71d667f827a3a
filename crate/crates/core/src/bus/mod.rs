//! In-process topic bus with optional cluster bridging.
//!
//! Every device owns one [`Bus`]. Components publish typed [`Message`]s on
//! the topic their action maps to and drain their [`Subscription`]s from the
//! device's single logical thread. When bridging is enabled, configured
//! messages published on a shared topic are re-delivered to every peer bus
//! under the `cluster/` prefix; messages that arrive through a bridge are
//! never forwarded again.

mod message;

pub use message::*;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, Weak};

use serde::{Deserialize, Serialize};

use crate::error::BusError;
use crate::model::{DeviceId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Topic {
    #[serde(rename = "deploy")]
    Deploy,
    #[serde(rename = "analyze")]
    Analyze,
    #[serde(rename = "forecast")]
    Forecast,
    #[serde(rename = "monitor")]
    Monitor,
    #[serde(rename = "cluster/deploy")]
    ClusterDeploy,
    #[serde(rename = "cluster/monitor")]
    ClusterMonitor,
}

impl Topic {
    pub const ALL: [Topic; 6] = [
        Topic::Deploy,
        Topic::Analyze,
        Topic::Forecast,
        Topic::Monitor,
        Topic::ClusterDeploy,
        Topic::ClusterMonitor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Topic::Deploy => "deploy",
            Topic::Analyze => "analyze",
            Topic::Forecast => "forecast",
            Topic::Monitor => "monitor",
            Topic::ClusterDeploy => "cluster/deploy",
            Topic::ClusterMonitor => "cluster/monitor",
        }
    }

    pub fn is_cluster(self) -> bool {
        matches!(self, Topic::ClusterDeploy | Topic::ClusterMonitor)
    }

    /// The `cluster/` counterpart of a shareable topic.
    pub fn clustered(self) -> Option<Topic> {
        match self {
            Topic::Deploy => Some(Topic::ClusterDeploy),
            Topic::Monitor => Some(Topic::ClusterMonitor),
            _ => None,
        }
    }

    /// The local topic a cluster topic mirrors.
    pub fn local(self) -> Topic {
        match self {
            Topic::ClusterDeploy => Topic::Deploy,
            Topic::ClusterMonitor => Topic::Monitor,
            t => t,
        }
    }

    /// Whether `action` may travel on this topic.
    pub fn allows(self, action: Action) -> bool {
        action.topic() == self.local()
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topic {
    type Err = BusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Topic::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| BusError::UnknownTopic(s.to_string()))
    }
}

/// One logical publication as seen by a bus, used for message accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Publication {
    pub at: SimTime,
    pub topic: Topic,
    pub message_id: String,
    pub action: Action,
    pub origin: DeviceId,
    pub correlation_id: String,
}

type Queue = Arc<Mutex<VecDeque<Message>>>;

/// A stream of messages delivered on one topic after subscription.
#[derive(Debug)]
pub struct Subscription {
    topic: Topic,
    queue: Queue,
}

impl Subscription {
    pub fn topic(&self) -> Topic {
        self.topic
    }

    pub fn try_recv(&self) -> Option<Message> {
        self.queue.lock().expect("queue poisoned").pop_front()
    }

    /// Takes every message currently queued, in delivery order.
    pub fn drain(&self) -> Vec<Message> {
        self.queue.lock().expect("queue poisoned").drain(..).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.lock().expect("queue poisoned").is_empty()
    }
}

#[derive(Debug)]
struct Peer {
    id: DeviceId,
    bus: Weak<Mutex<BusState>>,
}

#[derive(Debug)]
struct BusState {
    device: DeviceId,
    bridging: bool,
    shared: BTreeSet<Topic>,
    peers: Vec<Peer>,
    subscribers: BTreeMap<Topic, Vec<Weak<Mutex<VecDeque<Message>>>>>,
    publications: Vec<Publication>,
    next_seq: u64,
    clock: SimTime,
}

impl BusState {
    fn deliver(&mut self, topic: Topic, msg: &Message) {
        self.publications.push(Publication {
            at: self.clock,
            topic,
            message_id: msg.id.clone(),
            action: msg.action(),
            origin: msg.origin,
            correlation_id: msg.correlation_id.clone(),
        });
        if let Some(subs) = self.subscribers.get_mut(&topic) {
            subs.retain(|w| match w.upgrade() {
                Some(q) => {
                    q.lock().expect("queue poisoned").push_back(msg.clone());
                    true
                }
                None => false,
            });
        }
    }
}

/// Messages forwarded across a bridge: cluster-scoped deployment requests
/// and monitoring results. Verdicts and updates stay on their device.
fn bridgeable(msg: &Message) -> bool {
    match &msg.body {
        Body::DeploymentRequest(r) => r.scope == Scope::Cluster,
        Body::MonitoringResult(_) => true,
        _ => false,
    }
}

/// Handle to one device's bus; clones share the same bus.
#[derive(Debug, Clone)]
pub struct Bus {
    state: Arc<Mutex<BusState>>,
}

impl Bus {
    /// A bus without cluster topics.
    pub fn new(device: DeviceId) -> Self {
        Self::build(device, false)
    }

    /// A bus that accepts `cluster/*` subscriptions and can be bridged.
    pub fn with_bridging(device: DeviceId) -> Self {
        Self::build(device, true)
    }

    fn build(device: DeviceId, bridging: bool) -> Self {
        Bus {
            state: Arc::new(Mutex::new(BusState {
                device,
                bridging,
                shared: BTreeSet::new(),
                peers: Vec::new(),
                subscribers: BTreeMap::new(),
                publications: Vec::new(),
                next_seq: 0,
                clock: 0,
            })),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BusState> {
        self.state.lock().expect("bus poisoned")
    }

    pub fn device(&self) -> DeviceId {
        self.lock().device
    }

    pub fn bridging_enabled(&self) -> bool {
        self.lock().bridging
    }

    /// Stamps subsequent publications with simulated time `now`.
    pub fn set_clock(&self, now: SimTime) {
        self.lock().clock = now;
    }

    /// Builds a message originating on this device with a fresh id.
    pub fn message(&self, body: Body, correlation_id: impl Into<String>) -> Message {
        let mut st = self.lock();
        st.next_seq += 1;
        Message {
            id: format!("{}#{}", st.device, st.next_seq),
            origin: st.device,
            correlation_id: correlation_id.into(),
            sent_at: st.clock,
            body,
        }
    }

    pub fn subscribe(&self, topic: Topic) -> Result<Subscription, BusError> {
        let mut st = self.lock();
        if topic.is_cluster() && !st.bridging {
            return Err(BusError::BridgingDisabled(topic.name().to_string()));
        }
        let queue: Queue = Arc::new(Mutex::new(VecDeque::new()));
        st.subscribers
            .entry(topic)
            .or_default()
            .push(Arc::downgrade(&queue));
        Ok(Subscription { topic, queue })
    }

    /// Subscribes by topic name, as an external adapter would.
    pub fn subscribe_named(&self, topic: &str) -> Result<Subscription, BusError> {
        self.subscribe(topic.parse()?)
    }

    pub fn publish(&self, topic: Topic, msg: Message) -> Result<(), BusError> {
        if topic.is_cluster() || !topic.allows(msg.action()) {
            return Err(BusError::Protocol {
                action: msg.action().to_string(),
                topic: topic.name().to_string(),
            });
        }
        let peers: Vec<Arc<Mutex<BusState>>> = {
            let mut st = self.lock();
            st.deliver(topic, &msg);
            if st.bridging && st.shared.contains(&topic) && bridgeable(&msg) {
                st.peers.iter().filter_map(|p| p.bus.upgrade()).collect()
            } else {
                Vec::new()
            }
        };
        if let Some(cluster_topic) = topic.clustered() {
            for peer in peers {
                peer.lock()
                    .expect("bus poisoned")
                    .deliver(cluster_topic, &msg);
            }
        }
        Ok(())
    }

    /// Builds and publishes a message on the topic its action maps to.
    pub fn send(&self, body: Body, correlation_id: impl Into<String>) -> Message {
        let topic = body.action().topic();
        let msg = self.message(body, correlation_id);
        self.publish(topic, msg.clone())
            .expect("action topic is always valid");
        msg
    }

    /// Connects this bus to `peers` for the `shared` topics. Re-registering a
    /// known peer is a no-op.
    pub fn bridge(&self, peers: &[Bus], shared: &[Topic]) -> Result<(), BusError> {
        if peers.is_empty() {
            return Ok(());
        }
        let me = self.device();
        let peer_ids: Vec<(DeviceId, Weak<Mutex<BusState>>)> = peers
            .iter()
            .map(|p| (p.device(), Arc::downgrade(&p.state)))
            .collect();
        if peer_ids.iter().any(|(id, _)| *id == me) {
            return Err(BusError::SelfPeer);
        }
        let mut st = self.lock();
        if !st.bridging {
            return Err(BusError::BridgingDisabled("bridge".to_string()));
        }
        for t in shared {
            if t.clustered().is_none() {
                return Err(BusError::UnknownTopic(format!("cluster/{}", t.name())));
            }
            st.shared.insert(*t);
        }
        for (id, bus) in peer_ids {
            if !st.peers.iter().any(|p| p.id == id) {
                st.peers.push(Peer { id, bus });
            }
        }
        st.peers.sort_by_key(|p| p.id);
        Ok(())
    }

    pub fn peers(&self) -> Vec<DeviceId> {
        self.lock().peers.iter().map(|p| p.id).collect()
    }

    /// Every publication seen by this bus, including bridged arrivals.
    pub fn publications(&self) -> Vec<Publication> {
        self.lock().publications.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ImageName, LimitRole, OwnerId};

    fn dev(n: u8) -> DeviceId {
        DeviceId::new(10, 0, 0, n)
    }

    fn forecast_request() -> Body {
        Body::ForecastRequest(ForecastRequest {
            containers: vec![],
            horizon: 3,
        })
    }

    fn deploy_request(scope: Scope) -> Body {
        Body::DeploymentRequest(DeploymentRequest {
            request_id: "r1".into(),
            owner: OwnerId::new("vendor").unwrap(),
            image: ImageName::new("memory-1").unwrap(),
            requester: "test".into(),
            attempt: 1,
            target_role: LimitRole::Request,
            target: None,
            scope,
        })
    }

    fn monitoring(device: DeviceId) -> Body {
        Body::MonitoringResult(crate::hostsim::MetricsSample::empty(device, 0))
    }

    #[test]
    fn action_topic_table() {
        use Action::*;
        let expected = [
            (DeploymentRequest, Topic::Deploy),
            (DeploymentAnalysisRequest, Topic::Analyze),
            (DeploymentOptimizationRequest, Topic::Analyze),
            (ForecastRequest, Topic::Forecast),
            (ForecastResponse, Topic::Forecast),
            (DeploymentAccept, Topic::Deploy),
            (DeploymentCancel, Topic::Deploy),
            (DeploymentUpdate, Topic::Deploy),
            (MonitoringResult, Topic::Monitor),
        ];
        for (a, t) in expected {
            assert_eq!(a.topic(), t, "{a}");
        }
    }

    #[test]
    fn publish_reaches_subscriber() {
        let bus = Bus::new(dev(1));
        let sub = bus.subscribe(Topic::Forecast).unwrap();
        let msg = bus.message(forecast_request(), "c1");
        bus.publish(Topic::Forecast, msg.clone()).unwrap();
        assert_eq!(sub.try_recv(), Some(msg));
        assert_eq!(sub.try_recv(), None);
    }

    #[test]
    fn wrong_topic_is_protocol_error() {
        let bus = Bus::new(dev(1));
        let msg = bus.message(
            Body::ForecastResponse(ForecastResponse { results: vec![] }),
            "c",
        );
        assert!(matches!(
            bus.publish(Topic::Deploy, msg),
            Err(BusError::Protocol { .. })
        ));
    }

    #[test]
    fn fan_out_and_empty_stream() {
        let bus = Bus::new(dev(1));
        let a = bus.subscribe(Topic::Analyze).unwrap();
        let b = bus.subscribe(Topic::Analyze).unwrap();
        let quiet = bus.subscribe(Topic::Monitor).unwrap();
        let body = Body::DeploymentOptimizationRequest(OptimizationRequest {
            cycle: 1,
            container: crate::model::ContainerId::new("c1").unwrap(),
            batch_size: 1,
        });
        let m = bus.send(body, "x");
        assert_eq!(a.drain(), vec![m.clone()]);
        assert_eq!(b.drain(), vec![m]);
        assert!(quiet.is_empty());
    }

    #[test]
    fn subscription_only_sees_later_messages_in_order() {
        let bus = Bus::new(dev(1));
        bus.send(forecast_request(), "early");
        let sub = bus.subscribe(Topic::Forecast).unwrap();
        let m1 = bus.send(forecast_request(), "a");
        let m2 = bus.send(forecast_request(), "b");
        assert_eq!(sub.drain(), vec![m1, m2]);
    }

    #[test]
    fn unknown_and_unavailable_topics() {
        let bus = Bus::new(dev(1));
        assert!(matches!(
            bus.subscribe_named("metrics"),
            Err(BusError::UnknownTopic(_))
        ));
        assert!(matches!(
            bus.subscribe(Topic::ClusterMonitor),
            Err(BusError::BridgingDisabled(_))
        ));
        assert!(bus.subscribe_named("cluster/deploy").is_err());
    }

    fn cluster() -> Vec<Bus> {
        let buses: Vec<Bus> = (1..=3).map(|n| Bus::with_bridging(dev(n))).collect();
        for (i, b) in buses.iter().enumerate() {
            let peers: Vec<Bus> = buses
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, p)| p.clone())
                .collect();
            b.bridge(&peers, &[Topic::Monitor, Topic::Deploy]).unwrap();
        }
        buses
    }

    #[test]
    fn monitoring_result_is_bridged_with_origin() {
        let buses = cluster();
        let subs: Vec<_> = buses
            .iter()
            .map(|b| b.subscribe(Topic::ClusterMonitor).unwrap())
            .collect();
        let local = buses[0].subscribe(Topic::Monitor).unwrap();
        let m = buses[0].send(monitoring(dev(1)), "m");
        assert_eq!(local.drain().len(), 1);
        assert!(subs[0].is_empty(), "origin does not hear its own bridge");
        for s in &subs[1..] {
            let got = s.drain();
            assert_eq!(got.len(), 1);
            assert_eq!(got[0].origin, dev(1));
            assert_eq!(got[0].id, m.id);
        }
    }

    #[test]
    fn bridged_messages_are_not_rebridged() {
        let buses = cluster();
        buses[0].send(deploy_request(Scope::Cluster), "r1");
        let total: usize = buses
            .iter()
            .map(|b| {
                b.publications()
                    .iter()
                    .filter(|p| p.topic == Topic::ClusterDeploy)
                    .count()
            })
            .sum();
        assert_eq!(total, 2, "exactly one delivery per peer");
        for b in &buses {
            assert!(b.publications().iter().all(|p| p.topic != Topic::Monitor));
        }
        assert!(buses[1]
            .publish(Topic::ClusterDeploy, buses[1].message(deploy_request(Scope::Cluster), "x"))
            .is_err());
    }

    #[test]
    fn local_requests_and_verdicts_stay_local() {
        let buses = cluster();
        buses[0].send(deploy_request(Scope::Local), "r");
        assert!(buses[1].publications().is_empty());
        assert!(buses[2].publications().is_empty());
    }

    #[test]
    fn bridge_edge_cases() {
        let a = Bus::with_bridging(dev(1));
        let b = Bus::with_bridging(dev(2));
        a.bridge(&[], &[Topic::Monitor]).unwrap();
        assert!(a.peers().is_empty());
        a.bridge(std::slice::from_ref(&b), &[Topic::Monitor]).unwrap();
        a.bridge(std::slice::from_ref(&b), &[Topic::Monitor]).unwrap();
        assert_eq!(a.peers(), vec![dev(2)]);
        assert!(matches!(a.bridge(std::slice::from_ref(&a), &[]), Err(BusError::SelfPeer)));
        assert!(a.bridge(std::slice::from_ref(&b), &[Topic::Forecast]).is_err());
        let plain = Bus::new(dev(3));
        assert!(plain.bridge(&[b], &[Topic::Monitor]).is_err());
    }

    #[test]
    fn wire_format_carries_action_field() {
        let bus = Bus::new(dev(1));
        let m = bus.message(deploy_request(Scope::Cluster), "r1");
        let v: serde_json::Value = serde_json::from_slice(&m.to_wire()).unwrap();
        assert_eq!(v["action"], "deployment_request");
        assert_eq!(v["payload"]["image"], "memory-1");
        assert_eq!(v["origin"], "10.0.0.1");
        assert_eq!(Message::from_wire(&m.to_wire()).unwrap(), m);
        assert!(Message::from_wire(br#"{"action":"nope"}"#).is_err());
    }

    proptest::proptest! {
        #[test]
        fn subscribers_see_every_message_in_order(tags in proptest::collection::vec("[a-z]{1,6}", 0..40)) {
            let bus = Bus::new(dev(1));
            let sub = bus.subscribe(Topic::Forecast).unwrap();
            let sent: Vec<Message> = tags.iter().map(|t| bus.send(forecast_request(), t.as_str())).collect();
            let got = sub.drain();
            proptest::prop_assert_eq!(got.iter().map(|m| m.correlation_id.clone()).collect::<Vec<_>>(), tags);
            proptest::prop_assert_eq!(got, sent);
        }
    }
}
