//! `greensim`: runs the simulator behind the gateway, benchmarks the engine,
//! and replays command traces offline.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use greensim_cli::{parse_trace, replay_offline};
use greensim_core::engine::{run, RunMode};
use greensim_core::{Engine, Scenario};
use greensim_gateway::runtime::{Gateway, RuntimeOptions};
use greensim_gateway::GatewayConfig;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "greensim", version, about = "Greenhouse rover simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the simulation through the gateway.
    Run {
        /// Scenario file, or `default` / `corridor` for the built-ins.
        #[arg(long, default_value = "default")]
        scenario: String,
        #[arg(long, default_value = "realtime")]
        mode: RunMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// TCP listen address; overrides the gateway config.
        #[arg(long)]
        listen: Option<String>,
        /// WebSocket and console listen address; overrides the gateway config.
        #[arg(long)]
        ws_listen: Option<String>,
        /// Directory of console static files.
        #[arg(long)]
        console_dir: Option<PathBuf>,
        /// Gateway config; GREENSIM_GATEWAY_CONFIG takes precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Simulated seconds to run; runs until interrupted when absent.
        #[arg(long)]
        duration: Option<f64>,
        /// Also write the PerfReport as JSON here.
        #[arg(long)]
        perf_json: Option<PathBuf>,
    },
    /// Tick the engine without a gateway and print a PerfReport.
    Bench {
        #[arg(long, default_value = "default")]
        scenario: String,
        #[arg(long, default_value = "afap")]
        mode: RunMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long)]
        json: bool,
    },
    /// Replay a command trace on a virtual clock and print the report.
    Replay {
        #[arg(long, default_value = "default")]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trace: PathBuf,
        /// Simulated milliseconds to run after the last step.
        #[arg(long, default_value_t = 2_000)]
        tail_ms: u64,
        /// Write the telemetry stream here.
        #[arg(long)]
        telemetry: Option<PathBuf>,
    },
    /// Print a built-in scenario as JSON.
    Scenario {
        #[arg(default_value = "default")]
        name: String,
    },
}

fn builtin(name: &str) -> Option<Scenario> {
    match name {
        "default" => Some(Scenario::default_greenhouse()),
        "corridor" => Some(Scenario::corridor(40.0, 3.0, 0.6)),
        "empty" => Some(Scenario::empty(10.0, 5.0)),
        _ => None,
    }
}

fn load_scenario(arg: &str) -> Result<Scenario> {
    if let Some(s) = builtin(arg) {
        if !Path::new(arg).exists() {
            return Ok(s);
        }
    }
    let (scenario, _) = greensim_core::load_scenario_file(arg).with_context(|| format!("loading scenario {arg}"))?;
    Ok(scenario)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run {
            scenario,
            mode,
            seed,
            listen,
            ws_listen,
            console_dir,
            config,
            duration,
            perf_json,
        } => {
            let mut cfg = GatewayConfig::load_from_env(config.as_deref())?;
            if let Some(l) = listen {
                cfg.listen.tcp_listen = Some(l);
            }
            if let Some(l) = ws_listen {
                cfg.listen.ws_listen = Some(l);
            }
            if console_dir.is_some() {
                cfg.listen.console_dir = console_dir;
            }
            if cfg.clients.is_empty() {
                log::warn!("gateway config lists no clients; nobody can authenticate");
            }
            let engine = Engine::new(load_scenario(&scenario)?, seed)?;
            let options = RuntimeOptions {
                mode,
                duration_s: duration,
                ..RuntimeOptions::default()
            };
            let gateway = Gateway::spawn(cfg, engine, options)?;
            if let Some(a) = gateway.tcp_addr() {
                println!("tcp {a}");
            }
            if let Some(a) = gateway.ws_addr() {
                println!("ws {a}");
            }
            let (tx, rx) = crossbeam_channel::bounded(1);
            ctrlc::set_handler(move || {
                let _ = tx.try_send(());
            })?;
            while !gateway.is_finished() {
                if rx.recv_timeout(std::time::Duration::from_millis(100)).is_ok() {
                    break;
                }
            }
            let summary = gateway.shutdown();
            print!("{}", summary.perf.to_table());
            println!(
                "commands      {} approved, {} rejected, {} audited",
                summary.stats.approved, summary.stats.rejected, summary.audited
            );
            if let Some(p) = perf_json {
                std::fs::write(&p, summary.perf.to_json()).with_context(|| format!("writing {}", p.display()))?;
            }
            if !summary.violations.is_empty() {
                bail!("{} applied commands violated the safety policy", summary.violations.len());
            }
        }
        Command::Bench {
            scenario,
            mode,
            seed,
            duration,
            json,
        } => {
            let mut engine = Engine::new(load_scenario(&scenario)?, seed)?;
            let report = run(&mut engine, mode, duration);
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_table());
            }
        }
        Command::Replay {
            scenario,
            seed,
            trace,
            tail_ms,
            telemetry,
        } => {
            let text = std::fs::read_to_string(&trace).with_context(|| format!("reading {}", trace.display()))?;
            let steps = parse_trace(&text)?;
            let (report, stream) = replay_offline(load_scenario(&scenario)?, seed, &steps, tail_ms)?;
            print!("{}", report.to_json());
            if let Some(p) = telemetry {
                std::fs::write(&p, stream).with_context(|| format!("writing {}", p.display()))?;
            }
            if !report.replay.passed() {
                bail!("{} steps had unexpected acks", report.replay.unexpected);
            }
        }
        Command::Scenario { name } => {
            let s = builtin(&name).with_context(|| format!("no built-in scenario {name}"))?;
            println!("{}", s.to_json());
        }
    }
    Ok(())
}
