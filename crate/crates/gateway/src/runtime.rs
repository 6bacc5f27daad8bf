//! Real-time gateway: TCP and WebSocket listeners feeding a [`GatewayCore`]
//! that runs in lockstep with the engine loop.

use crate::config::GatewayConfig;
use crate::core::{transport_error, FilterStats, GatewayCore};
use crate::latency::{Clock, SystemClock};
use crate::web::{self, HttpOutcome};
use crossbeam_channel::{Receiver, Sender, TryRecvError};
use greensim_core::engine::{run_until, PerfReport, RunMode};
use greensim_core::{Engine, TickOutput};
use greensim_messaging::{decode_text, encode, encode_text, ConnId, DecodeError, Envelope, FrameReader};
use std::cell::RefCell;
use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::rc::Rc;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

const POLL: Duration = Duration::from_millis(20);

type Key = u64;

enum NetEvent {
    Open(Key, Sender<Envelope>),
    /// A decoded envelope and its arrival time.
    Frame(Key, Envelope, u64),
    /// A frame that failed to decode; `fatal` ends the connection.
    Bad { key: Key, code: &'static str, message: String, fatal: bool },
    Closed(Key),
}

/// What every connection thread shares.
#[derive(Clone)]
struct Wire {
    events: Sender<NetEvent>,
    stop: Arc<AtomicBool>,
    clock: Arc<dyn Clock>,
}

pub struct RuntimeOptions {
    pub mode: RunMode,
    /// Simulated seconds to run for; `None` runs until shutdown.
    pub duration_s: Option<f64>,
    pub clock: Arc<dyn Clock>,
}

impl Default for RuntimeOptions {
    fn default() -> Self {
        Self {
            mode: RunMode::Realtime,
            duration_s: None,
            clock: Arc::new(SystemClock::default()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub perf: PerfReport,
    pub stats: FilterStats,
    pub audited: u64,
    pub violations: Vec<String>,
}

/// A running gateway and engine. Dropping it without [`Gateway::shutdown`]
/// leaves the threads running until the configured duration elapses.
pub struct Gateway {
    tcp_addr: Option<SocketAddr>,
    ws_addr: Option<SocketAddr>,
    shutdown: Arc<AtomicBool>,
    engine_thread: Option<JoinHandle<RunSummary>>,
    listeners: Vec<JoinHandle<()>>,
}

impl Gateway {
    /// Binds the configured listeners and starts the engine loop.
    pub fn spawn(config: GatewayConfig, mut engine: Engine, options: RuntimeOptions) -> io::Result<Gateway> {
        let shutdown = Arc::new(AtomicBool::new(false));
        let keys = Arc::new(AtomicU64::new(1));
        let (events_tx, events_rx) = crossbeam_channel::unbounded();
        let mut listeners = Vec::new();
        let wire = Wire {
            events: events_tx,
            stop: shutdown.clone(),
            clock: options.clock.clone(),
        };

        let tcp_addr = match &config.listen.tcp_listen {
            Some(addr) => {
                let listener = TcpListener::bind(addr)?;
                listener.set_nonblocking(true)?;
                let local = listener.local_addr()?;
                let (wire, keys) = (wire.clone(), keys.clone());
                listeners.push(std::thread::spawn(move || {
                    accept_loop(listener, &wire.stop, |stream| {
                        serve_tcp(stream, keys.fetch_add(1, Ordering::SeqCst), wire.clone())
                    })
                }));
                log::info!("tcp listening on {local}");
                Some(local)
            }
            None => None,
        };
        let ws_addr = match &config.listen.ws_listen {
            Some(addr) => {
                let listener = TcpListener::bind(addr)?;
                listener.set_nonblocking(true)?;
                let local = listener.local_addr()?;
                let (wire, keys) = (wire.clone(), keys.clone());
                let dir = config.listen.console_dir.clone();
                listeners.push(std::thread::spawn(move || {
                    accept_loop(listener, &wire.stop, |stream| {
                        serve_http(stream, dir.clone(), keys.fetch_add(1, Ordering::SeqCst), wire.clone())
                    })
                }));
                log::info!("websocket listening on {local}");
                Some(local)
            }
            None => None,
        };
        drop(wire);

        let stop = shutdown.clone();
        let arm = engine.scenario().rover.arm.clone();
        let engine_thread = std::thread::Builder::new().name("engine".into()).spawn(move || {
            let core = GatewayCore::new(config, arm);
            let audit = core.audit();
            engine.set_audit(Box::new(audit.clone()));
            let summary = run_loop(&mut engine, core, events_rx, &stop, options);
            stop.store(true, Ordering::SeqCst);
            RunSummary {
                audited: audit.checked(),
                violations: audit.violations(),
                ..summary
            }
        })?;

        Ok(Gateway {
            tcp_addr,
            ws_addr,
            shutdown,
            engine_thread: Some(engine_thread),
            listeners,
        })
    }

    pub fn tcp_addr(&self) -> Option<SocketAddr> {
        self.tcp_addr
    }

    pub fn ws_addr(&self) -> Option<SocketAddr> {
        self.ws_addr
    }

    pub fn is_finished(&self) -> bool {
        self.engine_thread.as_ref().is_none_or(|h| h.is_finished())
    }

    /// Stops the engine loop and listeners and returns the run summary.
    pub fn shutdown(mut self) -> RunSummary {
        self.shutdown.store(true, Ordering::SeqCst);
        self.join()
    }

    /// Waits for the configured duration to elapse.
    pub fn wait(mut self) -> RunSummary {
        self.join()
    }

    fn join(&mut self) -> RunSummary {
        let summary = self
            .engine_thread
            .take()
            .expect("joined once")
            .join()
            .expect("engine thread panicked");
        self.shutdown.store(true, Ordering::SeqCst);
        for h in self.listeners.drain(..) {
            let _ = h.join();
        }
        summary
    }
}

fn run_loop(
    engine: &mut Engine,
    core: GatewayCore,
    events: Receiver<NetEvent>,
    stop: &AtomicBool,
    options: RuntimeOptions,
) -> RunSummary {
    struct Shared {
        core: GatewayCore,
        view: greensim_core::RoverView,
        conns: HashMap<Key, (ConnId, Sender<Envelope>)>,
        by_conn: HashMap<ConnId, Key>,
    }
    let clock = options.clock;
    let shared = Rc::new(RefCell::new(Shared {
        core,
        view: engine.view(),
        conns: HashMap::new(),
        by_conn: HashMap::new(),
    }));

    let source = {
        let shared = shared.clone();
        let clock = clock.clone();
        move || {
            let mut s = shared.borrow_mut();
            let now = clock.now_ms();
            while let Ok(ev) = events.try_recv() {
                match ev {
                    NetEvent::Open(key, tx) => {
                        let conn = s.core.connect();
                        s.conns.insert(key, (conn, tx));
                        s.by_conn.insert(conn, key);
                    }
                    NetEvent::Frame(key, env, at_ms) => {
                        if let Some(&(conn, _)) = s.conns.get(&key) {
                            s.core.receive(conn, env, at_ms.min(now));
                        }
                    }
                    NetEvent::Bad { key, code, message, fatal } => {
                        let Some((conn, tx)) = s.conns.get(&key).cloned() else {
                            continue;
                        };
                        if fatal {
                            // Straight to the wire; the connection is going away.
                            let _ = tx.send(transport_error(code, message));
                            s.core.disconnect(conn);
                            s.conns.remove(&key);
                            s.by_conn.remove(&conn);
                        } else {
                            s.core.send_error(conn, code, message, now);
                        }
                    }
                    NetEvent::Closed(key) => {
                        if let Some((conn, _)) = s.conns.remove(&key) {
                            s.core.disconnect(conn);
                            s.by_conn.remove(&conn);
                        }
                    }
                }
            }
            let s = &mut *s;
            s.core.step(now, &s.view)
        }
    };
    let sink = {
        let shared = shared.clone();
        move |out: TickOutput| {
            let mut s = shared.borrow_mut();
            let now = clock.now_ms();
            s.core.on_tick(&out, now);
            s.view = out.view;
            for (conn, env) in s.core.flush(now) {
                if let Some((_, tx)) = s.by_conn.get(&conn).and_then(|k| s.conns.get(k)) {
                    let _ = tx.send(env);
                }
            }
            !stop.load(Ordering::SeqCst)
        }
    };
    let perf = run_until(engine, options.mode, options.duration_s, source, sink);
    let stats = shared.borrow().core.stats();
    RunSummary {
        perf,
        stats,
        audited: 0,
        violations: Vec::new(),
    }
}

fn accept_loop(listener: TcpListener, stop: &AtomicBool, mut serve: impl FnMut(TcpStream)) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::debug!("connection from {peer}");
                if stream.set_nonblocking(false).is_ok() {
                    let _ = stream.set_nodelay(true);
                    serve(stream);
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(POLL),
            Err(e) => {
                log::warn!("accept failed: {e}");
                std::thread::sleep(POLL);
            }
        }
    }
}

fn serve_tcp(stream: TcpStream, key: Key, wire: Wire) {
    let Wire { events, stop, clock } = wire;
    let (out_tx, out_rx) = crossbeam_channel::unbounded::<Envelope>();
    let Ok(mut writer) = stream.try_clone() else {
        return;
    };
    if events.send(NetEvent::Open(key, out_tx)).is_err() {
        return;
    }
    std::thread::spawn(move || {
        for env in out_rx {
            match encode(&env) {
                Ok(bytes) => {
                    if writer.write_all(&bytes).is_err() {
                        break;
                    }
                }
                Err(e) => log::warn!("dropping outbound frame: {e}"),
            }
        }
        let _ = writer.shutdown(Shutdown::Both);
    });
    std::thread::spawn(move || {
        let mut stream = stream;
        let _ = stream.set_read_timeout(Some(POLL * 5));
        let mut reader = FrameReader::new();
        let mut buf = vec![0u8; 64 * 1024];
        'read: while !stop.load(Ordering::SeqCst) {
            match stream.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => reader.push(&buf[..n]),
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
                Err(_) => break,
            }
            while let Some(frame) = reader.next_frame() {
                let ev = match frame {
                    Ok(env) => NetEvent::Frame(key, env, clock.now_ms()),
                    Err(e) => bad(key, &e, reader.is_poisoned()),
                };
                let fatal = matches!(ev, NetEvent::Bad { fatal: true, .. });
                if events.send(ev).is_err() || fatal {
                    break 'read;
                }
            }
        }
        let _ = events.send(NetEvent::Closed(key));
    });
}

fn bad(key: Key, e: &DecodeError, fatal: bool) -> NetEvent {
    NetEvent::Bad {
        key,
        code: e.code(),
        message: e.to_string(),
        fatal,
    }
}

fn serve_http(stream: TcpStream, console_dir: Option<PathBuf>, key: Key, wire: Wire) {
    let Wire { events, stop, clock } = wire;
    std::thread::spawn(move || {
        let _ = stream.set_read_timeout(Some(Duration::from_secs(10)));
        let mut ws = match web::accept(stream, console_dir.as_deref()) {
            Ok(HttpOutcome::WebSocket(ws)) => ws,
            Ok(HttpOutcome::Served) => return,
            Err(e) => {
                log::debug!("http request failed: {e}");
                return;
            }
        };
        let (out_tx, out_rx) = crossbeam_channel::unbounded::<Envelope>();
        if events.send(NetEvent::Open(key, out_tx)).is_err() {
            return;
        }
        let _ = ws.get_mut().set_read_timeout(Some(Duration::from_millis(5)));
        'conn: while !stop.load(Ordering::SeqCst) {
            match ws.read() {
                Ok(msg) => {
                    let text = match msg {
                        tungstenite::Message::Text(t) => Some(t.as_str().to_owned()),
                        tungstenite::Message::Binary(b) => Some(String::from_utf8_lossy(&b).into_owned()),
                        tungstenite::Message::Close(_) => break,
                        _ => None,
                    };
                    if let Some(text) = text {
                        let ev = match decode_text(&text) {
                            Ok(env) => NetEvent::Frame(key, env, clock.now_ms()),
                            Err(e) => bad(key, &e, false),
                        };
                        if events.send(ev).is_err() {
                            break;
                        }
                    }
                }
                Err(tungstenite::Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                Err(_) => break,
            }
            loop {
                match out_rx.try_recv() {
                    Ok(env) => {
                        if ws.send(tungstenite::Message::text(encode_text(&env))).is_err() {
                            break 'conn;
                        }
                    }
                    Err(TryRecvError::Empty) => break,
                    Err(TryRecvError::Disconnected) => {
                        let _ = ws.close(None);
                        let _ = ws.flush();
                        break 'conn;
                    }
                }
            }
        }
        let _ = events.send(NetEvent::Closed(key));
    });
}
