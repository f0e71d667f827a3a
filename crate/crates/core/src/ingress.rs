//! Transport-agnostic routing of the deployment endpoint.
//!
//! `POST /deploy` with `{"owner": ..., "image": ...}` answers
//! `202 {"request_id": ...}`; `GET /deployments/<id>` answers
//! `200 {"request_id": ..., "status": {"state": ...}}`.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::knowledge::RequestStatus;
use crate::model::{ImageName, OwnerId};
use crate::scenario::Simulation;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeployBody {
    pub owner: OwnerId,
    pub image: ImageName,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub status: u16,
    pub body: Value,
}

impl Response {
    fn new(status: u16, body: Value) -> Self {
        Response { status, body }
    }

    fn error(status: u16, msg: impl Into<String>) -> Self {
        Response::new(status, json!({ "error": msg.into() }))
    }
}

/// Anything that accepts deployment requests.
pub trait DeployTarget {
    fn submit(&mut self, owner: OwnerId, image: ImageName) -> Result<String, String>;
    fn status(&self, request_id: &str) -> Option<RequestStatus>;
}

impl DeployTarget for Simulation {
    fn submit(&mut self, owner: OwnerId, image: ImageName) -> Result<String, String> {
        Simulation::submit(self, None, owner, image).map_err(|e| e.to_string())
    }

    fn status(&self, request_id: &str) -> Option<RequestStatus> {
        Simulation::status(self, request_id)
    }
}

pub fn route(target: &mut dyn DeployTarget, method: &str, path: &str, body: &[u8]) -> Response {
    let path = path.split('?').next().unwrap_or("");
    match (method, path) {
        ("POST", "/deploy") => {
            let req: DeployBody = match serde_json::from_slice(body) {
                Ok(r) => r,
                Err(e) => return Response::error(400, format!("invalid body: {e}")),
            };
            match target.submit(req.owner, req.image) {
                Ok(id) => Response::new(202, json!({ "request_id": id })),
                Err(e) => Response::error(500, e),
            }
        }
        (_, "/deploy") => Response::error(405, "use POST"),
        ("GET", p) if p.starts_with("/deployments/") => {
            let id = &p["/deployments/".len()..];
            match target.status(id) {
                Some(s) => Response::new(200, json!({ "request_id": id, "status": s })),
                None => Response::error(404, format!("unknown request {id}")),
            }
        }
        (_, p) if p.starts_with("/deployments/") => Response::error(405, "use GET"),
        _ => Response::error(404, "not found"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[derive(Default)]
    struct Fake {
        seen: BTreeMap<String, RequestStatus>,
    }

    impl DeployTarget for Fake {
        fn submit(&mut self, _: OwnerId, _: ImageName) -> Result<String, String> {
            let id = format!("r{}", self.seen.len() + 1);
            self.seen.insert(id.clone(), RequestStatus::Pending);
            Ok(id)
        }

        fn status(&self, id: &str) -> Option<RequestStatus> {
            self.seen.get(id).cloned()
        }
    }

    #[test]
    fn deploy_then_query() {
        let mut f = Fake::default();
        let r = route(&mut f, "POST", "/deploy", br#"{"owner":"v","image":"memory-1"}"#);
        assert_eq!(r.status, 202);
        assert_eq!(r.body["request_id"], "r1");
        let s = route(&mut f, "GET", "/deployments/r1", b"");
        assert_eq!(s.status, 200);
        assert_eq!(s.body["status"]["state"], "pending");
    }

    #[test]
    fn errors_map_to_status_codes() {
        let mut f = Fake::default();
        assert_eq!(route(&mut f, "POST", "/deploy", b"{").status, 400);
        assert_eq!(route(&mut f, "GET", "/deploy", b"").status, 405);
        assert_eq!(route(&mut f, "GET", "/deployments/r9", b"").status, 404);
        assert_eq!(route(&mut f, "GET", "/other", b"").status, 404);
    }
}
