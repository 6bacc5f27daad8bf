//! Latency shaping: FIFO delay lines driven by an explicit millisecond clock.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyProfile {
    pub name: String,
    pub one_way_delay_ms: u64,
    pub jitter_ms: u64,
}

impl LatencyProfile {
    pub fn internet() -> Self {
        Self {
            name: "internet".into(),
            one_way_delay_ms: 1000,
            jitter_ms: 100,
        }
    }

    pub fn intranet() -> Self {
        Self {
            name: "intranet".into(),
            one_way_delay_ms: 0,
            jitter_ms: 0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.one_way_delay_ms == 0 && self.jitter_ms == 0
    }
}

/// Holds items for `delay + uniform(0, jitter)` ms. Release times never
/// decrease, so items leave in the order they entered.
#[derive(Debug)]
pub struct DelayLine<T> {
    delay_ms: u64,
    jitter_ms: u64,
    queue: VecDeque<(u64, T)>,
    last_release_ms: u64,
    rng: ChaCha8Rng,
}

impl<T> DelayLine<T> {
    pub fn new(profile: &LatencyProfile, seed: u64) -> Self {
        Self {
            delay_ms: profile.one_way_delay_ms,
            jitter_ms: profile.jitter_ms,
            queue: VecDeque::new(),
            last_release_ms: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn is_passthrough(&self) -> bool {
        self.delay_ms == 0 && self.jitter_ms == 0
    }

    /// Queues `item` at `now_ms` and returns its release time.
    pub fn push(&mut self, now_ms: u64, item: T) -> u64 {
        let jitter = if self.jitter_ms > 0 {
            self.rng.random_range(0..=self.jitter_ms)
        } else {
            0
        };
        let release = (now_ms + self.delay_ms + jitter).max(self.last_release_ms);
        self.last_release_ms = release;
        self.queue.push_back((release, item));
        release
    }

    pub fn pop_ready(&mut self, now_ms: u64) -> Vec<T> {
        let mut out = Vec::new();
        while self.queue.front().is_some_and(|(t, _)| *t <= now_ms) {
            out.push(self.queue.pop_front().expect("front checked").1);
        }
        out
    }

    pub fn next_release(&self) -> Option<u64> {
        self.queue.front().map(|(t, _)| *t)
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Drops the oldest queued item matching `pred`, if any.
    pub fn drop_oldest(&mut self, pred: impl Fn(&T) -> bool) -> bool {
        match self.queue.iter().position(|(_, x)| pred(x)) {
            Some(i) => {
                self.queue.remove(i);
                true
            }
            None => false,
        }
    }
}

/// Millisecond time source for the gateway runtime.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

/// Wall-clock milliseconds since the Unix epoch, advanced monotonically
/// from the moment of construction.
#[derive(Debug, Clone)]
pub struct SystemClock {
    epoch_ms: u64,
    start: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        let epoch_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Self {
            epoch_ms,
            start: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.epoch_ms + self.start.elapsed().as_millis() as u64
    }
}

/// Manually advanced clock for deterministic tests.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock(Arc<AtomicU64>);

impl VirtualClock {
    pub fn new(start_ms: u64) -> Self {
        Self(Arc::new(AtomicU64::new(start_ms)))
    }

    pub fn advance(&self, ms: u64) -> u64 {
        self.0.fetch_add(ms, Ordering::SeqCst) + ms
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}
