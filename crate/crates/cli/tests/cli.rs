use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::time::Duration;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_orchestrion"))
}

#[test]
fn list_scenarios_names_every_builtin() {
    let out = bin().arg("list-scenarios").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in orchestrion_core::scenario::BUILTIN_NAMES {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn passing_builtin_exits_zero_and_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--builtin", "exp1_mem", "--seed", "3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("(seed 3)"));
    assert!(stdout.lines().any(|l| l.starts_with("PASS")));

    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(
        metrics.lines().next(),
        Some("t,container,cpu_util,cpu_limit,cpu_throttle,mem_util,mem_limit,status")
    );
    assert!(metrics.lines().count() > 100);
    let per_container = std::fs::read_dir(dir.path().join("containers")).unwrap().count();
    assert_eq!(per_container, 5);
    assert!(dir.path().join("events.jsonl").is_file());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
}

#[test]
fn shipped_example_scenario_passes() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/two_memory_apps.json");
    let out = bin().args(["run", path]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn failing_expectation_exits_one() {
    let out = bin().args(["run", "--builtin", "exp1_cpu"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn scenario_file_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = orchestrion_core::scenario::builtin("exp4_mem_400").unwrap();
    let path = dir.path().join("s.json");
    std::fs::write(&path, config.to_json()).unwrap();
    let out = bin().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(0));

    let out = bin().args(["run", "--builtin", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&path, "{\"name\": 1}").unwrap();
    let out = bin().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn http(addr: &str, method: &str, path: &str, body: &str) -> (u16, serde_json::Value) {
    let mut s = TcpStream::connect(addr).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut text = String::new();
    s.read_to_string(&mut text).unwrap();
    let status = text.split_whitespace().nth(1).unwrap().parse().unwrap();
    let json = text.split("\r\n\r\n").nth(1).unwrap_or("null");
    (status, serde_json::from_str(json).unwrap_or(serde_json::Value::Null))
}

#[test]
fn serve_accepts_deployments_over_http() {
    let child = bin()
        .args(["serve", "--builtin", "exp1_mem", "--addr", "127.0.0.1:0", "--rate", "200", "--no-schedule"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut server = Server(child);
    let mut line = String::new();
    BufReader::new(server.0.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").expect("listening line").to_string();

    let (status, body) = http(&addr, "POST", "/deploy", r#"{"owner":"vendor","image":"memory-1"}"#);
    assert_eq!(status, 202);
    let id = body["request_id"].as_str().unwrap().to_string();

    let (status, body) = http(&addr, "GET", &format!("/deployments/{id}"), "");
    assert_eq!(status, 200);
    assert_eq!(body["request_id"], id.as_str());
    assert!(body["status"].to_string().contains("running"), "{body}");

    assert_eq!(http(&addr, "GET", "/deployments/r999", "").0, 404);
    assert_eq!(http(&addr, "POST", "/deploy", "not json").0, 400);
    assert_eq!(http(&addr, "GET", "/deploy", "").0, 405);
}
