//! `greensim-cli`: operator client for the gateway. Interactive by default;
//! `--script` replays a trace and exits nonzero on any unexpected ack.

use anyhow::{bail, Context, Result};
use clap::Parser;
use crossbeam_channel::{select, unbounded};
use greensim_cli::{parse_op, parse_trace, replay_live, Client, ClientError, Incoming, Op};
use greensim_cli::client::reply_ack;
use greensim_messaging::{Ack, Envelope, Kind};
use std::collections::HashMap;
use std::io::BufRead;
use std::path::PathBuf;
use std::time::{Duration, Instant};

#[derive(Parser)]
#[command(name = "greensim-cli", version, about = "Operator client for the greensim gateway")]
struct Args {
    /// Gateway TCP address.
    #[arg(long, default_value = "127.0.0.1:7400")]
    gateway: String,
    #[arg(long, env = "GREENSIM_TOKEN")]
    token: String,
    /// Replay this trace instead of reading commands from stdin.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Stable, line-oriented output for scripts.
    #[arg(long)]
    porcelain: bool,
    /// How long to wait for each reply.
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
}

fn describe(ack: &Ack) -> String {
    match &ack.reason {
        Some(r) if r.message.is_empty() => format!("{} {}", ack.status.as_str(), r.code),
        Some(r) => format!("{} {}: {}", ack.status.as_str(), r.code, r.message),
        None => ack.status.as_str().to_string(),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let timeout = Duration::from_millis(args.timeout_ms);
    let mut client = Client::connect(&args.gateway).with_context(|| format!("connecting to {}", args.gateway))?;
    match client.authenticate(&args.token, timeout) {
        Ok(ack) => {
            if !args.porcelain {
                let role = ack.extra.get("role").and_then(|v| v.as_str()).unwrap_or("?");
                eprintln!("authenticated as {role}");
            }
        }
        Err(ClientError::Rejected { status, code, message }) => {
            bail!("authentication {}: {code}: {message}", status.as_str())
        }
        Err(e) => return Err(e.into()),
    }
    match &args.script {
        Some(path) => script(&mut client, path, timeout, args.porcelain),
        None => interactive(&mut client, args.porcelain),
    }
}

fn script(client: &mut Client, path: &PathBuf, timeout: Duration, porcelain: bool) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let steps = parse_trace(&text)?;
    let report = replay_live(client, &steps, timeout, |r| {
        if porcelain {
            println!("{}", r.porcelain());
        } else {
            let status = r.status.map(|s| s.as_str()).unwrap_or("NO REPLY");
            let code = r.code.as_deref().unwrap_or("");
            let mark = if r.ok { "" } else { "  << expected " };
            let expected = if r.ok { String::new() } else { r.expected.clone() };
            println!(
                "[{:>3}] {:<5} {:<28} {status} {code} {}ms{mark}{expected}",
                r.index,
                r.kind.as_str(),
                r.topic,
                r.rtt_ms.unwrap_or(0)
            );
        }
    })?;
    if let Some((min, mean, max)) = report.rtt_summary() {
        eprintln!("rtt ms: min {min} mean {mean:.1} max {max}");
    }
    if !report.passed() {
        bail!("{} of {} steps had unexpected acks", report.unexpected, report.steps.len());
    }
    Ok(())
}

fn print_event(env: &Envelope, porcelain: bool) {
    let payload = serde_json::to_string(&env.payload_value()).unwrap_or_default();
    if porcelain {
        println!("{} {} {payload}", env.kind.as_str(), env.topic);
    } else {
        println!("<- {} {} {payload}", env.kind.as_str(), env.topic);
    }
}

fn interactive(client: &mut Client, porcelain: bool) -> Result<()> {
    let (line_tx, line_rx) = unbounded::<String>();
    std::thread::spawn(move || {
        for line in std::io::stdin().lock().lines() {
            let Ok(line) = line else { break };
            if line_tx.send(line).is_err() {
                break;
            }
        }
    });
    let incoming = client.incoming().clone();
    let mut pending: HashMap<String, (String, Instant)> = HashMap::new();
    if !porcelain {
        eprintln!("type `help` for commands");
    }
    loop {
        select! {
            recv(line_rx) -> line => {
                let Ok(line) = line else { break };
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                match parse_op(line) {
                    Ok(Op::Quit) => break,
                    Ok(Op::Help) => println!("{}", greensim_cli::command::HELP),
                    Ok(Op::Send { kind, topic, payload }) => {
                        let id = client.send(kind, &topic, payload)?;
                        pending.insert(id.to_hex(), (line.to_string(), Instant::now()));
                    }
                    Err(e) => eprintln!("error: {e}"),
                }
            }
            recv(incoming) -> msg => match msg {
                Ok(Incoming::Envelope(env, at)) => {
                    let reply = matches!(env.kind, Kind::Ack | Kind::Err | Kind::Pong);
                    match pending.remove(&env.correlation_id.to_hex()).filter(|_| reply) {
                        Some((line, sent)) => {
                            let rtt = at.saturating_duration_since(sent).as_millis();
                            let text = if env.kind == Kind::Pong { "PONG".to_string() } else { describe(&reply_ack(&env)) };
                            if porcelain {
                                println!("ack {} {text} rtt_ms={rtt}", env.correlation_id.to_hex());
                            } else {
                                println!("{line} -> {text} ({rtt} ms)");
                            }
                        }
                        None => print_event(&env, porcelain),
                    }
                }
                Ok(Incoming::Closed(reason)) => {
                    bail!("connection closed{}", reason.map(|r| format!(": {r}")).unwrap_or_default())
                }
                Err(_) => bail!("connection closed"),
            }
        }
    }
    client.close();
    Ok(())
}
