//! Structured run log: every decision the orchestration loop takes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bus::SignedLimits;
use crate::model::{ContainerId, DeviceId, ImageName, LimitRole, LimitSet, OwnerId, ResourceAmount, SimTime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    /// An external deployment request entered the system.
    Requested {
        request_id: String,
        owner: OwnerId,
        image: ImageName,
    },
    /// This device selected itself as executor of a cluster request.
    Selected {
        request_id: String,
        candidates: usize,
    },
    Admission {
        request_id: String,
        image: ImageName,
        attempt: u32,
        role: LimitRole,
        target: LimitSet,
        predicted_avail: SignedLimits,
        accepted: bool,
    },
    /// A request finally failed (both analyses rejected, image missing, ...).
    Rejected {
        request_id: String,
        image: ImageName,
        reason: String,
    },
    Deployed {
        request_id: String,
        container: ContainerId,
        image: ImageName,
        attempt: u32,
        limits: LimitSet,
    },
    OomKilled {
        container: ContainerId,
        demand: ResourceAmount,
        limit: ResourceAmount,
    },
    Stopped {
        container: ContainerId,
    },
    RetryScheduled {
        request_id: String,
        attempt: u32,
        role: LimitRole,
        target: LimitSet,
    },
    RetriesExhausted {
        request_id: String,
        attempts: u32,
    },
    Optimized {
        cycle: u64,
        container: ContainerId,
        previous: LimitSet,
        proposed: LimitSet,
        applied: LimitSet,
        predicted_avail: SignedLimits,
    },
    Archived {
        key: String,
        points: usize,
        hash: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: SimTime,
    pub device: DeviceId,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: SimTime, device: DeviceId, kind: EventKind) {
        self.events.push(Event { t, device, kind });
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let line = serde_json::to_string(e).expect("events serialize");
            let _ = writeln!(out, "{line}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_has_one_tagged_line_per_event() {
        let mut log = EventLog::new();
        let d = DeviceId::new(10, 0, 0, 1);
        log.push(0, d, EventKind::Stopped { container: ContainerId::new("c").unwrap() });
        log.push(
            3,
            d,
            EventKind::RetriesExhausted {
                request_id: "r1".into(),
                attempts: 10,
            },
        );
        let text = log.to_jsonl();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            r#"{"t":0,"device":"10.0.0.1","event":"stopped","container":"c"}"#
        );
        let back: Event = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(&back, &log.events()[1]);
    }
}
