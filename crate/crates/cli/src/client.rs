//! Blocking TCP client. A reader thread decodes frames and stamps their
//! arrival; the owner writes and matches acks by correlation id.

use crossbeam_channel::{Receiver, RecvTimeoutError};
use greensim_messaging::{encode, Ack, AckStatus, CorrelationId, Envelope, FrameReader, Kind};
use serde_json::{json, Value};
use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("connection closed{}", .0.as_ref().map(|m| format!(": {m}")).unwrap_or_default())]
    Closed(Option<String>),
    #[error("timed out waiting for {0}")]
    Timeout(String),
    #[error("{status} {code}: {message}")]
    Rejected {
        status: AckStatus,
        code: String,
        message: String,
    },
}

#[derive(Debug, Clone)]
pub enum Incoming {
    Envelope(Envelope, Instant),
    Closed(Option<String>),
}

pub struct Client {
    stream: TcpStream,
    incoming: Receiver<Incoming>,
    backlog: VecDeque<(Envelope, Instant)>,
    closed: Option<Option<String>>,
    seq: u64,
    id_base: u128,
    next_id: u64,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Client, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut read_half = stream.try_clone()?;
        let (tx, rx) = crossbeam_channel::unbounded();
        std::thread::spawn(move || {
            let mut reader = FrameReader::new();
            let mut buf = vec![0u8; 64 * 1024];
            let reason = loop {
                match read_half.read(&mut buf) {
                    Ok(0) => break None,
                    Ok(n) => reader.push(&buf[..n]),
                    Err(e) => break Some(e.to_string()),
                }
                let at = Instant::now();
                while let Some(frame) = reader.next_frame() {
                    match frame {
                        Ok(env) => {
                            if tx.send(Incoming::Envelope(env, at)).is_err() {
                                return;
                            }
                        }
                        Err(e) if reader.is_poisoned() => {
                            let _ = tx.send(Incoming::Closed(Some(e.to_string())));
                            return;
                        }
                        Err(e) => log_drop(&e),
                    }
                }
            };
            let _ = tx.send(Incoming::Closed(reason));
        });
        Ok(Client {
            stream,
            incoming: rx,
            backlog: VecDeque::new(),
            closed: None,
            seq: 0,
            id_base: rand::random::<u128>() & !u128::from(u64::MAX),
            next_id: 0,
        })
    }

    /// Raw event stream, for callers multiplexing it with other input.
    pub fn incoming(&self) -> &Receiver<Incoming> {
        &self.incoming
    }

    pub fn fresh_id(&mut self) -> CorrelationId {
        self.next_id += 1;
        CorrelationId::from_u128(self.id_base | u128::from(self.next_id))
    }

    /// Writes `env` with the next sequence number and the wall-clock time.
    pub fn send_envelope(&mut self, env: Envelope) -> Result<CorrelationId, ClientError> {
        self.seq += 1;
        let ts = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let env = env.with_seq(self.seq, ts);
        let bytes = encode(&env).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        self.stream.write_all(&bytes)?;
        Ok(env.correlation_id)
    }

    pub fn send(&mut self, kind: Kind, topic: &str, payload: Value) -> Result<CorrelationId, ClientError> {
        let id = self.fresh_id();
        self.send_envelope(Envelope::new(kind, topic, id, payload))
    }

    /// Next envelope in arrival order, waiting at most `timeout`.
    pub fn next(&mut self, timeout: Duration) -> Result<Option<(Envelope, Instant)>, ClientError> {
        if let Some(e) = self.backlog.pop_front() {
            return Ok(Some(e));
        }
        self.recv(timeout)
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<(Envelope, Instant)>, ClientError> {
        if let Some(reason) = &self.closed {
            return Err(ClientError::Closed(reason.clone()));
        }
        match self.incoming.recv_timeout(timeout) {
            Ok(Incoming::Envelope(env, at)) => Ok(Some((env, at))),
            Ok(Incoming::Closed(reason)) => {
                self.closed = Some(reason.clone());
                Err(ClientError::Closed(reason))
            }
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => {
                self.closed = Some(None);
                Err(ClientError::Closed(None))
            }
        }
    }

    /// Waits for the ACK (or ERR) answering `id`; everything else read in
    /// the meantime stays queued for [`Client::next`].
    pub fn wait_reply(&mut self, id: CorrelationId, timeout: Duration) -> Result<(Envelope, Instant), ClientError> {
        if let Some(i) = self.backlog.iter().position(|(e, _)| is_reply(e, id)) {
            return Ok(self.backlog.remove(i).expect("index in range"));
        }
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(ClientError::Timeout(format!("reply to {}", id.to_hex())));
            }
            match self.recv(left)? {
                Some((env, at)) if is_reply(&env, id) => return Ok((env, at)),
                Some(other) => self.backlog.push_back(other),
                None => {}
            }
        }
    }

    /// Sends and waits for the ack; returns it with the measured round trip.
    pub fn request(
        &mut self,
        kind: Kind,
        topic: &str,
        payload: Value,
        timeout: Duration,
    ) -> Result<(Ack, Duration), ClientError> {
        let sent = Instant::now();
        let id = self.send(kind, topic, payload)?;
        let (env, at) = self.wait_reply(id, timeout)?;
        Ok((reply_ack(&env), at.duration_since(sent)))
    }

    /// AUTH; a refusal comes back as [`ClientError::Rejected`] with the
    /// gateway's reason verbatim.
    pub fn authenticate(&mut self, token: &str, timeout: Duration) -> Result<Ack, ClientError> {
        let (ack, _) = self.request(Kind::Auth, "", json!({ "token": token }), timeout)?;
        match ack.status {
            AckStatus::Success => Ok(ack),
            status => {
                let (code, message) = ack
                    .reason
                    .map(|r| (r.code, r.message))
                    .unwrap_or_else(|| ("UNKNOWN".into(), String::new()));
                Err(ClientError::Rejected { status, code, message })
            }
        }
    }

    pub fn close(&self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

impl Drop for Client {
    fn drop(&mut self) {
        self.close();
    }
}

fn is_reply(env: &Envelope, id: CorrelationId) -> bool {
    env.correlation_id == id && matches!(env.kind, Kind::Ack | Kind::Err | Kind::Pong)
}

/// An ERR reply is reported as a REJECTED ack carrying the error code.
pub fn reply_ack(env: &Envelope) -> Ack {
    if let Some(ack) = env.as_ack() {
        return ack;
    }
    if let Some(err) = env.as_error() {
        return Ack::rejected(&err.code, err.message);
    }
    Ack::success()
}

fn log_drop(e: &greensim_messaging::DecodeError) {
    eprintln!("dropping undecodable frame: {e}");
}
