//! The one-line command language of the interactive client.
//!
//! ```text
//! sub <pattern>            unsub <pattern>
//! cmd base <v_left> <v_right>
//! cmd arm <joint> <delta_deg> [speed_deg_s]
//! cmd traj <q1,..,q6 deg> [<q1,..,q6 deg> ..]
//! cmd gripper <aperture_m>
//! cmd pluck <force_n>
//! cmd stop
//! estop | clear
//! mission start <marker> [marker ..] | mission resume | mission abort
//! ping | help | quit
//! ```

use greensim_core::engine::parse_joint;
use greensim_gateway::ESTOP_TOPIC;
use greensim_messaging::Kind;
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Send { kind: Kind, topic: String, payload: Value },
    Help,
    Quit,
}

impl Op {
    fn cmd(topic: &str, payload: Value) -> Op {
        Op::Send {
            kind: Kind::Cmd,
            topic: topic.into(),
            payload,
        }
    }
}

pub const HELP: &str = "\
sub <pattern> | unsub <pattern>
cmd base <v_left> <v_right>
cmd arm <joint> <delta_deg> [speed_deg_s]
cmd traj <q1,..,q6 deg> [...]
cmd gripper <aperture_m> | cmd pluck <force_n> | cmd stop
estop | clear
mission start <marker>... | mission resume | mission abort
ping | help | quit";

fn num(word: Option<&str>, what: &str) -> Result<f64, String> {
    let w = word.ok_or_else(|| format!("missing {what}"))?;
    let v: f64 = w.parse().map_err(|_| format!("{what}: not a number: {w}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{what} must be finite"))
    }
}

fn no_more<'a>(mut rest: impl Iterator<Item = &'a str>) -> Result<(), String> {
    match rest.next() {
        Some(w) => Err(format!("unexpected argument: {w}")),
        None => Ok(()),
    }
}

pub fn parse_op(line: &str) -> Result<Op, String> {
    let mut words = line.split_whitespace();
    let head = words.next().ok_or("empty command")?;
    let op = match head {
        "sub" | "unsub" => {
            let pattern = words.next().ok_or("missing topic pattern")?;
            let kind = if head == "sub" { Kind::Sub } else { Kind::Unsub };
            Op::Send {
                kind,
                topic: pattern.into(),
                payload: Value::Null,
            }
        }
        "estop" => Op::cmd(ESTOP_TOPIC, json!({"engage": true})),
        "clear" => Op::cmd(ESTOP_TOPIC, json!({"engage": false})),
        "ping" => Op::Send {
            kind: Kind::Ping,
            topic: String::new(),
            payload: Value::Null,
        },
        "help" => Op::Help,
        "quit" | "exit" => Op::Quit,
        "mission" => match words.next() {
            Some("start") => {
                let markers = words
                    .by_ref()
                    .map(|w| w.parse::<u32>().map_err(|_| format!("bad marker id: {w}")))
                    .collect::<Result<Vec<_>, _>>()?;
                if markers.is_empty() {
                    return Err("mission start needs at least one marker".into());
                }
                Op::cmd("/rover/mission/cmd", json!({"kind": "mission", "type": "start", "markers": markers}))
            }
            Some(t @ ("resume" | "abort")) => Op::cmd("/rover/mission/cmd", json!({"kind": "mission", "type": t})),
            other => return Err(format!("mission expects start|resume|abort, got {other:?}")),
        },
        "cmd" => match words.next() {
            Some("base") => {
                let v_left = num(words.next(), "v_left")?;
                let v_right = num(words.next(), "v_right")?;
                Op::cmd("/rover/cmd_vel", json!({"kind": "base_velocity", "v_left": v_left, "v_right": v_right}))
            }
            Some("arm") => {
                let name = words.next().ok_or("missing joint")?;
                let joint = parse_joint(name).ok_or_else(|| format!("unknown joint {name}"))?;
                let delta = num(words.next(), "delta_deg")?.to_radians();
                let speed = match words.next() {
                    Some(w) => Some(num(Some(w), "speed_deg_s")?.to_radians()),
                    None => None,
                };
                Op::cmd(
                    "/rover/arm/cmd",
                    json!({"kind": "joint_delta", "joint": joint, "delta_rad": delta, "speed_rad_s": speed}),
                )
            }
            Some("traj") => {
                let waypoints = words
                    .by_ref()
                    .map(|w| {
                        let q = w
                            .split(',')
                            .map(|x| num(Some(x), "joint angle").map(f64::to_radians))
                            .collect::<Result<Vec<_>, _>>()?;
                        if q.len() == 6 {
                            Ok(q)
                        } else {
                            Err(format!("waypoint needs 6 angles, got {}", q.len()))
                        }
                    })
                    .collect::<Result<Vec<_>, String>>()?;
                if waypoints.is_empty() {
                    return Err("traj needs at least one waypoint".into());
                }
                Op::cmd("/rover/arm/cmd", json!({"kind": "joint_trajectory", "waypoints": waypoints, "speed_rad_s": null}))
            }
            Some("gripper") => {
                let a = num(words.next(), "aperture_m")?;
                Op::cmd("/rover/gripper/cmd", json!({"kind": "gripper_set", "aperture_m": a}))
            }
            Some("pluck") => {
                let f = num(words.next(), "force_n")?;
                Op::cmd("/rover/pluck/cmd", json!({"kind": "pluck", "force_n": f}))
            }
            Some("stop") => Op::cmd("/rover/cmd_vel", json!({"kind": "stop"})),
            other => return Err(format!("cmd expects base|arm|traj|gripper|pluck|stop, got {other:?}")),
        },
        other => return Err(format!("unknown command {other}; try help")),
    };
    no_more(words)?;
    Ok(op)
}
