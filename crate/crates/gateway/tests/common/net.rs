//! Minimal blocking TCP client for exercising a live gateway.

use greensim_messaging::{encode, Ack, CorrelationId, Envelope, FrameReader, Kind};
use serde_json::Value;
use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::{Duration, Instant};

pub struct Client {
    pub stream: TcpStream,
    reader: FrameReader,
    seq: u64,
    next_id: u128,
    pub backlog: VecDeque<Envelope>,
    pub closed: bool,
}

impl Client {
    pub fn connect(addr: SocketAddr) -> Client {
        let stream = TcpStream::connect(addr).expect("connect");
        stream.set_read_timeout(Some(Duration::from_millis(20))).unwrap();
        stream.set_nodelay(true).unwrap();
        Client {
            stream,
            reader: FrameReader::new(),
            seq: 0,
            next_id: 0,
            backlog: VecDeque::new(),
            closed: false,
        }
    }

    pub fn send(&mut self, kind: Kind, topic: &str, payload: Value) -> CorrelationId {
        self.next_id += 1;
        self.seq += 1;
        let id = CorrelationId::from_u128(0xc11e_0000_0000 | self.next_id);
        let env = Envelope::new(kind, topic, id, payload).with_seq(self.seq, 0);
        self.stream.write_all(&encode(&env).unwrap()).unwrap();
        id
    }

    pub fn write_raw(&mut self, bytes: &[u8]) {
        self.stream.write_all(bytes).unwrap();
    }

    /// Reads whatever is available within `wait`.
    pub fn pump(&mut self, wait: Duration) {
        let deadline = Instant::now() + wait;
        let mut buf = [0u8; 65536];
        loop {
            match self.stream.read(&mut buf) {
                Ok(0) => {
                    self.closed = true;
                    break;
                }
                Ok(n) => self.reader.push(&buf[..n]),
                Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
                Err(_) => {
                    self.closed = true;
                    break;
                }
            }
            while let Some(Ok(env)) = self.reader.next_frame() {
                self.backlog.push_back(env);
            }
            if Instant::now() >= deadline {
                break;
            }
        }
    }

    /// First envelope matching `pred`, removed from the backlog.
    pub fn wait_for(&mut self, timeout: Duration, mut pred: impl FnMut(&Envelope) -> bool) -> Option<Envelope> {
        let deadline = Instant::now() + timeout;
        loop {
            if let Some(i) = self.backlog.iter().position(&mut pred) {
                return self.backlog.remove(i);
            }
            if Instant::now() >= deadline || self.closed {
                return None;
            }
            self.pump(Duration::from_millis(5));
        }
    }

    pub fn wait_ack(&mut self, id: CorrelationId, timeout: Duration) -> Option<Ack> {
        self.wait_for(timeout, |e| e.kind == Kind::Ack && e.correlation_id == id)
            .and_then(|e| e.as_ack())
    }

    pub fn request(&mut self, kind: Kind, topic: &str, payload: Value) -> Ack {
        let id = self.send(kind, topic, payload);
        self.wait_ack(id, Duration::from_secs(10)).expect("ack")
    }
}

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .unwrap()
        .as_millis() as u64
}
