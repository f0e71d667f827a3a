use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use orchestrion_core::ingress;
use orchestrion_core::registry::Registry;
use orchestrion_core::scenario::{builtin, emit_traces, ScenarioConfig, Simulation, BUILTIN_NAMES};

#[derive(Parser)]
#[command(name = "orchestrion", version, about = "Edge container orchestration simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario to completion and check its expectations.
    Run {
        /// Scenario JSON file.
        scenario: Option<PathBuf>,
        /// Name of a built-in scenario instead of a file.
        #[arg(long, conflicts_with = "scenario")]
        builtin: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for CSV traces, events and the summary.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Persist the registry under this directory instead of in memory.
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Run a scenario in real time behind an HTTP deployment endpoint.
    Serve {
        scenario: Option<PathBuf>,
        #[arg(long, conflicts_with = "scenario")]
        builtin: Option<String>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Simulated seconds per wall-clock second.
        #[arg(long, default_value_t = 10)]
        rate: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Ignore the scenario's own schedule; only HTTP requests deploy.
        #[arg(long)]
        no_schedule: bool,
    },
}

fn load(scenario: Option<&Path>, name: Option<&str>, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut config = match (scenario, name) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ScenarioConfig::from_json(&text).with_context(|| format!("loading {}", path.display()))?
        }
        (None, Some(name)) => builtin(name)?,
        _ => bail!("give a scenario file or --builtin NAME"),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(config: ScenarioConfig, out: Option<&Path>, registry: Option<&Path>) -> Result<bool> {
    let registry = match registry {
        Some(dir) => Registry::open(dir)?,
        None => Registry::in_memory(),
    };
    let report = Simulation::new(config, registry)?.run()?;
    println!("scenario {} (seed {})", report.scenario, report.seed);
    for d in report.decisions() {
        println!(
            "  t={:<5} {} {} {} attempt {} {} cpu={} mem={} avail cpu={} mem={}",
            d.t,
            d.device,
            d.request_id,
            d.image,
            d.attempt,
            if d.accepted { "accept" } else { "reject" },
            d.target.cpu,
            d.target.mem,
            d.predicted_avail.cpu,
            d.predicted_avail.mem
        );
    }
    for e in &report.expectations {
        let mark = if e.passed { "PASS" } else { "FAIL" };
        println!("{mark} {}: {}", e.description, e.detail);
    }
    if let Some(dir) = out {
        let files = emit_traces(&report, dir)?;
        println!("wrote {} files to {}", files.len(), dir.display());
    }
    Ok(report.passed())
}

fn serve(mut config: ScenarioConfig, addr: &str, rate: u64, no_schedule: bool) -> Result<()> {
    if no_schedule {
        config.schedule.clear();
    }
    let sim = Arc::new(Mutex::new(Simulation::new(config, Registry::in_memory())?));
    let server = tiny_http::Server::http(addr).map_err(|e| anyhow::anyhow!("binding {addr}: {e}"))?;
    let bound = server.server_addr().to_ip().context("not an IP listener")?;
    println!("listening on http://{bound}");
    std::io::stdout().flush()?;

    let clock = Arc::clone(&sim);
    let tick = Duration::from_micros(1_000_000 / rate.max(1));
    thread::spawn(move || loop {
        {
            let mut s = clock.lock().expect("simulation poisoned");
            if s.is_finished() {
                return;
            }
            if let Err(e) = s.step() {
                eprintln!("simulation stopped: {e}");
                return;
            }
        }
        thread::sleep(tick);
    });

    for mut request in server.incoming_requests() {
        let mut body = Vec::new();
        if let Err(e) = request.as_reader().read_to_end(&mut body) {
            eprintln!("reading request: {e}");
            continue;
        }
        let method = request.method().as_str().to_string();
        let url = request.url().to_string();
        let response = {
            let mut s = sim.lock().expect("simulation poisoned");
            ingress::route(&mut *s, &method, &url, &body)
        };
        let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header");
        let reply = tiny_http::Response::from_string(response.body.to_string())
            .with_status_code(response.status)
            .with_header(header);
        if let Err(e) = request.respond(reply) {
            eprintln!("writing response: {e}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ListScenarios => {
            for name in BUILTIN_NAMES {
                let c = builtin(name).expect("listed scenarios exist");
                println!("{name:<14} {}", c.description);
            }
            Ok(true)
        }
        Command::Run {
            scenario,
            builtin,
            seed,
            out,
            registry,
        } => load(scenario.as_deref(), builtin.as_deref(), seed)
            .and_then(|c| run(c, out.as_deref(), registry.as_deref())),
        Command::Serve {
            scenario,
            builtin,
            addr,
            rate,
            seed,
            no_schedule,
        } => load(scenario.as_deref(), builtin.as_deref(), seed)
            .and_then(|c| serve(c, &addr, rate, no_schedule))
            .map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
