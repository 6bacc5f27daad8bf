//! Real-time factor and tick-rate measurement for engine runs.

use super::{Engine, EngineInput, TickOutput};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Sleeps so that simulated time tracks wall time.
    Realtime,
    /// Ticks back to back.
    Afap,
}

impl std::str::FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "realtime" => Ok(RunMode::Realtime),
            "afap" | "as-fast-as-possible" => Ok(RunMode::Afap),
            other => Err(format!("unknown mode {other:?} (realtime|afap)")),
        }
    }
}

/// Simulated seconds per wall second.
pub fn rtf(sim_elapsed_s: f64, wall_elapsed_s: f64) -> f64 {
    if wall_elapsed_s > 0.0 {
        sim_elapsed_s / wall_elapsed_s
    } else {
        f64::INFINITY
    }
}

/// Sliding-window RTF and FPS.
#[derive(Debug, Clone, PartialEq)]
pub struct PerfMetrics {
    pub window_s: f64,
    /// (wall seconds, sim seconds, tick index)
    samples: VecDeque<(f64, f64, u64)>,
}

impl PerfMetrics {
    pub fn new(window_s: f64) -> Self {
        Self {
            window_s,
            samples: VecDeque::new(),
        }
    }

    pub fn record(&mut self, wall_s: f64, sim_s: f64, tick: u64) {
        self.samples.push_back((wall_s, sim_s, tick));
        // Keep the newest sample at or before the window start as the anchor.
        while self.samples.len() > 2 && wall_s - self.samples[1].0 >= self.window_s {
            self.samples.pop_front();
        }
    }

    fn span(&self) -> Option<(f64, f64, u64)> {
        let first = self.samples.front()?;
        let last = self.samples.back()?;
        Some((last.0 - first.0, last.1 - first.1, last.2 - first.2))
    }

    pub fn raw_rtf(&self) -> f64 {
        self.span().map_or(0.0, |(w, s, _)| rtf(s, w))
    }

    /// RTF clamped to `[0, 1]` for reporting.
    pub fn rtf(&self) -> f64 {
        self.raw_rtf().clamp(0.0, 1.0)
    }

    pub fn fps(&self) -> f64 {
        self.span()
            .map_or(0.0, |(w, _, n)| if w > 0.0 { n as f64 / w } else { 0.0 })
    }
}

/// Upper bucket bounds in microseconds; the last bucket is open-ended.
pub const HISTOGRAM_BOUNDS_US: [u64; 10] = [50, 100, 250, 500, 1_000, 2_000, 5_000, 10_000, 20_000, 50_000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickHistogram {
    pub bounds_us: Vec<u64>,
    /// One more entry than `bounds_us`: the overflow bucket.
    pub counts: Vec<u64>,
}

impl Default for TickHistogram {
    fn default() -> Self {
        Self {
            bounds_us: HISTOGRAM_BOUNDS_US.to_vec(),
            counts: vec![0; HISTOGRAM_BOUNDS_US.len() + 1],
        }
    }
}

impl TickHistogram {
    pub fn record(&mut self, micros: u64) {
        let idx = self
            .bounds_us
            .iter()
            .position(|&b| micros <= b)
            .unwrap_or(self.bounds_us.len());
        self.counts[idx] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub mode: RunMode,
    pub ticks: u64,
    pub dt_s: f64,
    pub sim_time_s: f64,
    pub wall_time_s: f64,
    /// Whole-run RTF clamped to `[0, 1]`.
    pub rtf: f64,
    pub raw_rtf: f64,
    /// Ticks per wall second over the whole run.
    pub fps: f64,
    pub window_s: f64,
    pub window_rtf: f64,
    pub window_fps: f64,
    pub mean_tick_us: f64,
    pub max_tick_us: u64,
    pub histogram: TickHistogram,
}

impl PerfReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let mode = match self.mode {
            RunMode::Realtime => "realtime",
            RunMode::Afap => "afap",
        };
        let _ = writeln!(s, "mode          {mode}");
        let _ = writeln!(s, "ticks         {}", self.ticks);
        let _ = writeln!(s, "dt            {:.4} s", self.dt_s);
        let _ = writeln!(s, "sim time      {:.3} s", self.sim_time_s);
        let _ = writeln!(s, "wall time     {:.3} s", self.wall_time_s);
        let _ = writeln!(s, "rtf           {:.3} (raw {:.3})", self.rtf, self.raw_rtf);
        let _ = writeln!(s, "fps           {:.1}", self.fps);
        let _ = writeln!(
            s,
            "window {:>4.1}s  rtf {:.3}  fps {:.1}",
            self.window_s, self.window_rtf, self.window_fps
        );
        let _ = writeln!(s, "tick time     mean {:.1} us, max {} us", self.mean_tick_us, self.max_tick_us);
        let mut lo = 0;
        for (i, &c) in self.histogram.counts.iter().enumerate() {
            let label = match self.histogram.bounds_us.get(i) {
                Some(&hi) => format!("{lo:>6}-{hi:<6} us"),
                None => format!("{lo:>6}+       us"),
            };
            let _ = writeln!(s, "  {label} {c}");
            lo = self.histogram.bounds_us.get(i).copied().unwrap_or(lo);
        }
        s
    }
}

/// Ticks the engine for `duration_s` of simulated time with no commands.
pub fn run(engine: &mut Engine, mode: RunMode, duration_s: f64) -> PerfReport {
    run_until(engine, mode, Some(duration_s), Vec::new, |_| true)
}

/// General run loop. `source` supplies each tick's inputs and `sink`
/// consumes its output, returning false to end the run early.
pub fn run_until(
    engine: &mut Engine,
    mode: RunMode,
    duration_s: Option<f64>,
    mut source: impl FnMut() -> Vec<EngineInput>,
    mut sink: impl FnMut(TickOutput) -> bool,
) -> PerfReport {
    let dt = engine.dt_s();
    let max_ticks = duration_s.map(|d| (d / dt).round() as u64);
    let window_s = engine.config().perf_window_s;
    let mut metrics = PerfMetrics::new(window_s);
    let mut histogram = TickHistogram::default();
    let start_tick = engine.world().clock.tick_index;
    let start_sim = engine.world().clock.sim_time_s();
    let start = Instant::now();
    metrics.record(0.0, 0.0, 0);
    let mut ticks = 0u64;
    let mut busy = Duration::ZERO;
    let mut max_tick = Duration::ZERO;

    while max_ticks.is_none_or(|m| ticks < m) {
        let inputs = source();
        let t0 = Instant::now();
        let out = engine.tick(inputs);
        let spent = t0.elapsed();
        busy += spent;
        max_tick = max_tick.max(spent);
        histogram.record(spent.as_micros() as u64);
        ticks += 1;
        // Output goes out before the realtime wait so consumers see it early.
        let go_on = sink(out);

        if mode == RunMode::Realtime {
            let deadline = start + Duration::from_secs_f64(ticks as f64 * dt);
            let now = Instant::now();
            if deadline > now {
                std::thread::sleep(deadline - now);
            }
        }
        let wall = start.elapsed().as_secs_f64();
        let sim = engine.world().clock.sim_time_s() - start_sim;
        engine.world_mut().clock.wall_time_elapsed_s = wall;
        metrics.record(wall, sim, engine.world().clock.tick_index - start_tick);
        if !go_on {
            break;
        }
    }

    let wall = start.elapsed().as_secs_f64();
    let sim = engine.world().clock.sim_time_s() - start_sim;
    let raw = rtf(sim, wall);
    PerfReport {
        mode,
        ticks,
        dt_s: dt,
        sim_time_s: sim,
        wall_time_s: wall,
        rtf: raw.clamp(0.0, 1.0),
        raw_rtf: raw,
        fps: if wall > 0.0 { ticks as f64 / wall } else { 0.0 },
        window_s,
        window_rtf: metrics.rtf(),
        window_fps: metrics.fps(),
        mean_tick_us: if ticks > 0 {
            busy.as_secs_f64() * 1e6 / ticks as f64
        } else {
            0.0
        },
        max_tick_us: max_tick.as_micros() as u64,
        histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_definition() {
        assert!((rtf(10.0, 12.5) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn window_tracks_recent_samples() {
        let mut m = PerfMetrics::new(1.0);
        for i in 0..=100 {
            // Slow first half, real time second half.
            let w = if i <= 50 { i as f64 * 0.04 } else { 2.0 + (i - 50) as f64 * 0.02 };
            m.record(w, i as f64 * 0.02, i);
        }
        assert!((m.raw_rtf() - 1.0).abs() < 1e-9);
        assert!((m.fps() - 50.0).abs() < 1e-6);
        assert_eq!(m.rtf(), 1.0);
    }

    #[test]
    fn clamped_rtf_stays_in_unit_interval() {
        let mut m = PerfMetrics::new(5.0);
        m.record(0.0, 0.0, 0);
        m.record(1.0, 3.0, 150);
        assert_eq!(m.rtf(), 1.0);
        assert!((m.raw_rtf() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_buckets() {
        let mut h = TickHistogram::default();
        h.record(10);
        h.record(50);
        h.record(51);
        h.record(1_000_000);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[1], 1);
        assert_eq!(*h.counts.last().unwrap(), 1);
        assert_eq!(h.total(), 4);
    }

    #[test]
    fn mode_parses() {
        assert_eq!("afap".parse::<RunMode>(), Ok(RunMode::Afap));
        assert!("warp".parse::<RunMode>().is_err());
    }
}
