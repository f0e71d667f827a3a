//! Deployment front door and executor.

use std::cmp::Reverse;
use std::collections::BTreeMap;

use crate::bus::{AnalysisRequest, Body, DeploymentRequest, LimitUpdate, Message, Scope, Topic, Verdict};
use crate::device::Ctx;
use crate::events::EventKind;
use crate::hostsim::{ContainerStatus, MetricsSample, WorkloadSpec};
use crate::knowledge::{AvailabilityTable, Deployment, Knowledge, RequestStatus, TableEntry};
use crate::model::{ContainerId, DeviceId, LimitRole, LimitSet, ResourceKind};
use crate::registry::{ContentHash, Registry};

/// Everything the deployer needs to know about an image.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedImage {
    pub hash: ContentHash,
    pub spec: WorkloadSpec,
    pub request: LimitSet,
    pub base: LimitSet,
}

/// Looks up an image, pulls its blob and decodes the workload it carries
/// in its first layer.
pub fn resolve_image(
    registry: &Registry,
    req: &DeploymentRequest,
    default_request: LimitSet,
    default_base: LimitSet,
) -> Result<ResolvedImage, String> {
    let record = registry
        .get_image(&req.owner, &req.image)
        .map_err(|e| e.to_string())?;
    let blob = registry
        .fetch_blob(&record.image_hash)
        .map_err(|e| e.to_string())?;
    let layer = blob
        .layers
        .first()
        .ok_or_else(|| "image has no layers".to_string())?;
    let spec: WorkloadSpec =
        serde_json::from_slice(layer).map_err(|e| format!("image payload is not a workload: {e}"))?;
    let (request, base) = record.limits(default_request, default_base);
    Ok(ResolvedImage {
        hash: record.image_hash,
        spec,
        request,
        base,
    })
}

fn unalloc(e: &TableEntry, k: ResourceKind) -> i64 {
    match k {
        ResourceKind::Cpu => e.unallocated.cpu,
        ResourceKind::Mem => e.unallocated.mem,
    }
}

/// The device with the most unallocated capacity of the `dominant` kind,
/// then of the other kind, then with the smallest address. An empty table
/// selects `me`.
pub fn cluster_select(table: &AvailabilityTable, dominant: ResourceKind, me: DeviceId) -> DeviceId {
    table
        .iter()
        .max_by_key(|(id, e)| (unalloc(e, dominant), unalloc(e, dominant.other()), Reverse(**id)))
        .map(|(id, _)| *id)
        .unwrap_or(me)
}

/// Records a monitoring result; results older than the stored entry are
/// ignored.
pub fn maintain_table(table: &mut AvailabilityTable, origin: DeviceId, sample: &MetricsSample) -> bool {
    if table.get(&origin).is_some_and(|e| e.updated_at > sample.timestamp) {
        return false;
    }
    table.insert(
        origin,
        TableEntry {
            unallocated: sample.unallocated,
            avail: sample.avail,
            updated_at: sample.timestamp,
        },
    );
    true
}

pub fn container_id(req_image: &str, request_id: &str, attempt: u32) -> ContainerId {
    ContainerId::new(format!("{req_image}.{request_id}.a{attempt}")).expect("non-empty id")
}

#[derive(Debug, Clone)]
struct Pending {
    req: DeploymentRequest,
    image: ResolvedImage,
    role: LimitRole,
}

#[derive(Debug, Clone, Default)]
pub struct Deployer {
    pending: BTreeMap<String, Pending>,
}

impl Deployer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn handle(&mut self, ctx: &mut Ctx<'_>, _topic: Topic, msg: &Message) {
        match &msg.body {
            Body::DeploymentRequest(req) => self.on_request(ctx, msg, req),
            Body::DeploymentAccept(v) => self.on_accept(ctx, &msg.correlation_id, v),
            Body::DeploymentCancel(v) => self.on_cancel(ctx, &msg.correlation_id, v),
            Body::DeploymentUpdate(u) => Self::on_update(ctx, u),
            Body::MonitoringResult(s) => {
                maintain_table(&mut ctx.knowledge.table, msg.origin, s);
            }
            _ => {}
        }
    }

    fn on_request(&mut self, ctx: &mut Ctx<'_>, msg: &Message, req: &DeploymentRequest) {
        let me = ctx.device();
        let image = match resolve_image(
            ctx.registry,
            req,
            ctx.policy.default_request,
            ctx.policy.default_base,
        ) {
            Ok(i) => i,
            Err(reason) => {
                if msg.origin == me {
                    ctx.record(EventKind::Rejected {
                        request_id: req.request_id.clone(),
                        image: req.image.clone(),
                        reason: reason.clone(),
                    });
                    ctx.knowledge
                        .requests
                        .insert(req.request_id.clone(), RequestStatus::Rejected { reason });
                }
                return;
            }
        };
        if req.scope == Scope::Cluster && ctx.bus.bridging_enabled() {
            let executor = cluster_select(&ctx.knowledge.table, image.spec.class.dominant(), me);
            if executor != me {
                return;
            }
            let candidates = ctx.knowledge.table.len();
            ctx.record(EventKind::Selected {
                request_id: req.request_id.clone(),
                candidates,
            });
        }
        ctx.knowledge
            .requests
            .insert(req.request_id.clone(), RequestStatus::Pending);
        let (role, target) = match req.target {
            Some(t) => (req.target_role, t),
            None => (LimitRole::Request, image.request),
        };
        self.pending.insert(
            msg.correlation_id.clone(),
            Pending {
                req: req.clone(),
                image,
                role,
            },
        );
        Self::analyze(ctx, &msg.correlation_id, req, role, target);
    }

    fn analyze(ctx: &mut Ctx<'_>, corr: &str, req: &DeploymentRequest, role: LimitRole, target: LimitSet) {
        ctx.bus.send(
            Body::DeploymentAnalysisRequest(AnalysisRequest {
                request_id: req.request_id.clone(),
                owner: req.owner.clone(),
                image: req.image.clone(),
                attempt: req.attempt,
                role,
                target,
            }),
            corr.to_string(),
        );
    }

    fn on_accept(&mut self, ctx: &mut Ctx<'_>, corr: &str, v: &Verdict) {
        let Some(p) = self.pending.remove(corr) else {
            return;
        };
        let key = Knowledge::reservation_key(&v.request_id, v.attempt);
        ctx.knowledge.reservations.remove(&key);
        let id = container_id(p.req.image.as_str(), &p.req.request_id, p.req.attempt);
        let restarts = p.req.attempt.saturating_sub(1);
        match ctx
            .host
            .run_container(id.clone(), p.image.spec.label(), p.image.spec.clone(), v.target, restarts)
        {
            Ok(_) => {
                ctx.knowledge.deployments.push(Deployment {
                    container: id.clone(),
                    request_id: p.req.request_id.clone(),
                    owner: p.req.owner.clone(),
                    image: p.req.image.clone(),
                    image_hash: p.image.hash.clone(),
                    spec: p.image.spec.clone(),
                    request: p.image.request,
                    base: p.image.base,
                    attempt: p.req.attempt,
                    role: v.role,
                    limits: v.target,
                    started_at: ctx.now,
                    status: ContainerStatus::Running,
                    stable_cycles: 0,
                });
                let device = ctx.device();
                ctx.knowledge.requests.insert(
                    p.req.request_id.clone(),
                    RequestStatus::Running {
                        container: id.clone(),
                        device,
                    },
                );
                ctx.record(EventKind::Deployed {
                    request_id: p.req.request_id.clone(),
                    container: id,
                    image: p.req.image.clone(),
                    attempt: p.req.attempt,
                    limits: v.target,
                });
            }
            Err(e) => {
                let reason = e.to_string();
                ctx.record(EventKind::Rejected {
                    request_id: p.req.request_id.clone(),
                    image: p.req.image.clone(),
                    reason: reason.clone(),
                });
                ctx.knowledge
                    .requests
                    .insert(p.req.request_id.clone(), RequestStatus::Failed { reason: reason.clone() });
                ctx.bus.send(
                    Body::DeploymentCancel(Verdict {
                        reason,
                        ..v.clone()
                    }),
                    corr.to_string(),
                );
            }
        }
    }

    fn on_cancel(&mut self, ctx: &mut Ctx<'_>, corr: &str, v: &Verdict) {
        let Some(p) = self.pending.get_mut(corr) else {
            return;
        };
        if p.role == LimitRole::Request && p.req.target.is_none() {
            p.role = LimitRole::Base;
            let (req, base) = (p.req.clone(), p.image.base);
            Self::analyze(ctx, corr, &req, LimitRole::Base, base);
            return;
        }
        let p = self.pending.remove(corr).expect("present");
        let reason = format!("not admitted: {}", v.reason);
        ctx.record(EventKind::Rejected {
            request_id: p.req.request_id.clone(),
            image: p.req.image.clone(),
            reason: reason.clone(),
        });
        ctx.knowledge
            .requests
            .insert(p.req.request_id.clone(), RequestStatus::Rejected { reason });
    }

    fn on_update(ctx: &mut Ctx<'_>, u: &LimitUpdate) {
        if ctx.host.update_limits(&u.container, u.limits).is_ok() {
            if let Some(d) = ctx.knowledge.deployment_mut(&u.container) {
                d.limits = u.limits;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::SignedLimits;

    fn dev(n: u8) -> DeviceId {
        DeviceId::new(10, 0, 0, n)
    }

    fn table(mems: &[(u8, i64)]) -> AvailabilityTable {
        mems.iter()
            .map(|&(n, mem)| {
                (
                    dev(n),
                    TableEntry {
                        unallocated: SignedLimits { cpu: 1000, mem },
                        avail: SignedLimits { cpu: 1000, mem },
                        updated_at: 0,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn selection_prefers_most_available_then_smallest_address() {
        let m = ResourceKind::Mem;
        assert_eq!(cluster_select(&table(&[(1, 800), (2, 800), (3, 800)]), m, dev(2)), dev(1));
        assert_eq!(cluster_select(&table(&[(1, 650), (2, 800), (3, 800)]), m, dev(1)), dev(2));
        assert_eq!(cluster_select(&table(&[(1, 650), (2, 650), (3, 800)]), m, dev(1)), dev(3));
        assert_eq!(cluster_select(&table(&[(1, 650), (2, 650), (3, 650)]), m, dev(3)), dev(1));
    }

    #[test]
    fn empty_table_selects_self() {
        assert_eq!(cluster_select(&AvailabilityTable::new(), ResourceKind::Cpu, dev(7)), dev(7));
    }

    #[test]
    fn ties_on_dominant_kind_break_on_the_other() {
        let mut t = table(&[(1, 800), (2, 800)]);
        t.get_mut(&dev(2)).unwrap().unallocated.cpu = 1200;
        assert_eq!(cluster_select(&t, ResourceKind::Mem, dev(1)), dev(2));
    }

    #[test]
    fn table_ignores_stale_results() {
        let mut t = AvailabilityTable::new();
        let mut s = MetricsSample::empty(dev(2), 20);
        s.unallocated.mem = 500;
        assert!(maintain_table(&mut t, dev(2), &s));
        let mut old = MetricsSample::empty(dev(2), 10);
        old.unallocated.mem = 999;
        assert!(!maintain_table(&mut t, dev(2), &old));
        assert_eq!(t[&dev(2)].unallocated.mem, 500);
    }

    #[test]
    fn container_ids_are_readable() {
        assert_eq!(container_id("memory-3", "r4", 2).as_str(), "memory-3.r4.a2");
    }
}
