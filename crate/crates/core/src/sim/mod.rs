//! Deterministic synthetic event streams from moving blinking LEDs.
//!
//! Every LED edge becomes a burst of `events_per_edge` events (positive for
//! on, negative for off) scattered uniformly over a disc around the LED's
//! position, with timestamps jittered by up to `jitter_us`. A homogeneous
//! Poisson background adds noise. The same scene always yields the same
//! bytes.

mod scenarios;
mod trajectory;

use std::f64::consts::TAU;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Event, EventStream, Polarity, StreamHeader};
use crate::labels::{GroundTruthLabels, TruthPoint};
use crate::led::{LedConfig, LedTable};

pub use scenarios::{scenario, scenario_names, SCENARIOS};
pub use trajectory::Trajectory;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("LED {led:?} leaves the sensor at t={t_us} µs ({x:.2}, {y:.2})")]
    TrajectoryOutOfBounds { led: String, t_us: u64, x: f64, y: f64 },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Led(#[from] crate::led::LedError),
    #[error("parse scene: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Edge {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlinkEdge {
    pub t: u64,
    pub edge: Edge,
}

/// Edges in `[t0, t1)` of an LED that first turns on at `t0 + phase_us`.
pub fn blink_edges_with_phase(led: &LedConfig, phase_us: u64, t0: u64, t1: u64) -> Vec<BlinkEdge> {
    let on = u64::from(led.on_time_us);
    let off = u64::from(led.off_time_us);
    let mut edges = Vec::new();
    let mut t = t0 + phase_us;
    while t < t1 {
        edges.push(BlinkEdge { t, edge: Edge::On });
        if t + on >= t1 {
            break;
        }
        edges.push(BlinkEdge { t: t + on, edge: Edge::Off });
        t += on + off;
    }
    edges
}

/// Edges in `[t0, t1)` using the LED's id-derived phase.
pub fn blink_edges(led: &LedConfig, t0: u64, t1: u64) -> Vec<BlinkEdge> {
    blink_edges_with_phase(led, led.phase_us(), t0, t1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneLed {
    #[serde(flatten)]
    pub led: LedConfig,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occlusion {
    pub led_id: String,
    pub t_begin_us: u64,
    pub t_end_us: u64,
}

/// A flickering light that is not a marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    pub position: [f64; 2],
    pub on_time_us: u32,
    pub off_time_us: u32,
    pub radius_px: f64,
    pub t_begin_us: u64,
    pub t_end_us: u64,
}

/// A mirror image of an LED displaced by `offset` while active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    pub led_id: String,
    pub offset: [f64; 2],
    pub t_begin_us: u64,
    pub t_end_us: u64,
}

/// A line a joint is expected to cross after `t_start_us`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinishLine {
    pub led_id: String,
    pub p0: [f64; 2],
    pub p1: [f64; 2],
    pub t_start_us: u64,
}

fn default_width() -> u16 {
    crate::event::DEFAULT_SENSOR_WIDTH
}
fn default_height() -> u16 {
    crate::event::DEFAULT_SENSOR_HEIGHT
}
fn default_radius() -> f64 {
    2.0
}
fn default_events_per_edge() -> u32 {
    6
}
fn default_jitter() -> u32 {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub name: String,
    pub seed: u64,
    pub duration_us: u64,
    #[serde(default = "default_width")]
    pub sensor_width: u16,
    #[serde(default = "default_height")]
    pub sensor_height: u16,
    #[serde(default = "default_radius")]
    pub led_radius_px: f64,
    #[serde(default = "default_events_per_edge")]
    pub events_per_edge: u32,
    #[serde(default = "default_jitter")]
    pub jitter_us: u32,
    /// Extra delay of off-edge events relative to the true off transition.
    #[serde(default)]
    pub off_latency_us: u32,
    /// Background events per pixel per second.
    #[serde(default)]
    pub noise_rate: f64,
    pub leds: Vec<SceneLed>,
    #[serde(default)]
    pub occlusions: Vec<Occlusion>,
    #[serde(default)]
    pub distractors: Vec<Distractor>,
    #[serde(default)]
    pub reflections: Vec<Reflection>,
    #[serde(default)]
    pub lines: Vec<FinishLine>,
}

impl SceneConfig {
    /// A noise-free scene with default sensor and LED rendering.
    pub fn new(name: impl Into<String>, seed: u64, duration_us: u64, leds: Vec<SceneLed>) -> Self {
        Self {
            name: name.into(),
            seed,
            duration_us,
            sensor_width: default_width(),
            sensor_height: default_height(),
            led_radius_px: default_radius(),
            events_per_edge: default_events_per_edge(),
            jitter_us: default_jitter(),
            off_latency_us: 0,
            noise_rate: 0.0,
            leds,
            occlusions: Vec::new(),
            distractors: Vec::new(),
            reflections: Vec::new(),
            lines: Vec::new(),
        }
    }

    /// Cuts the scene to `duration_us`, dropping intervals and lines that no
    /// longer fit.
    pub fn truncated(mut self, duration_us: u64) -> Self {
        self.duration_us = self.duration_us.min(duration_us);
        let end = self.duration_us;
        self.occlusions.retain(|o| o.t_end_us <= end);
        self.distractors.retain(|d| d.t_end_us <= end);
        self.reflections.retain(|r| r.t_end_us <= end);
        self.lines.retain(|l| l.t_start_us < end);
        self
    }

    pub fn led_table(&self) -> Result<LedTable, SimError> {
        Ok(LedTable::new(self.leds.iter().map(|l| l.led.clone()).collect())?)
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene serializes")
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, SimError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn tick_count(&self) -> usize {
        self.duration_us.div_ceil(1000) as usize
    }

    pub fn is_occluded(&self, led_id: &str, t_us: u64) -> bool {
        self.occlusions
            .iter()
            .any(|o| o.led_id == led_id && o.t_begin_us <= t_us && t_us < o.t_end_us)
    }

    fn occludes_interval(&self, led_id: &str, t0: u64, t1: u64) -> bool {
        self.occlusions
            .iter()
            .any(|o| o.led_id == led_id && o.t_begin_us < t1 && t0 < o.t_end_us)
    }

    fn validate(&self) -> Result<LedTable, SimError> {
        let table = self.led_table()?;
        if self.duration_us == 0 {
            return Err(SimError::InvalidScene("duration must be positive".into()));
        }
        if !(self.noise_rate >= 0.0 && self.noise_rate.is_finite()) {
            return Err(SimError::InvalidScene("noise_rate must be finite and non-negative".into()));
        }
        if !(self.led_radius_px >= 0.0) {
            return Err(SimError::InvalidScene("led_radius_px must be non-negative".into()));
        }
        let known = |id: &str| table.index_of(id).is_some();
        for o in &self.occlusions {
            if !known(&o.led_id) {
                return Err(SimError::InvalidScene(format!("occlusion names unknown LED {:?}", o.led_id)));
            }
            if o.t_begin_us > o.t_end_us || o.t_end_us > self.duration_us {
                return Err(SimError::InvalidScene(format!(
                    "occlusion [{}, {}) not within [0, {}]",
                    o.t_begin_us, o.t_end_us, self.duration_us
                )));
            }
        }
        for r in &self.reflections {
            if !known(&r.led_id) {
                return Err(SimError::InvalidScene(format!("reflection names unknown LED {:?}", r.led_id)));
            }
        }
        for l in &self.lines {
            if !known(&l.led_id) {
                return Err(SimError::InvalidScene(format!("finish line names unknown LED {:?}", l.led_id)));
            }
        }
        let margin = self.led_radius_px;
        let (w, h) = (f64::from(self.sensor_width) - 1.0, f64::from(self.sensor_height) - 1.0);
        let check = |id: &str, t_us: u64, (x, y): (f64, f64)| {
            if x - margin < 0.0 || y - margin < 0.0 || x + margin > w || y + margin > h || !x.is_finite() || !y.is_finite() {
                Err(SimError::TrajectoryOutOfBounds { led: id.to_owned(), t_us, x, y })
            } else {
                Ok(())
            }
        };
        for l in &self.leds {
            for t_us in (0..=self.duration_us).step_by(500) {
                check(&l.led.id, t_us, l.trajectory.position(t_us as f64))?;
            }
        }
        for r in &self.reflections {
            let traj = &self.leds[table.index_of(&r.led_id).unwrap()].trajectory;
            for t_us in (r.t_begin_us..r.t_end_us.min(self.duration_us)).step_by(500) {
                let (x, y) = traj.position(t_us as f64);
                check(&r.led_id, t_us, (x + r.offset[0], y + r.offset[1]))?;
            }
        }
        for d in &self.distractors {
            let (x, y) = (d.position[0], d.position[1]);
            if x - d.radius_px < 0.0 || y - d.radius_px < 0.0 || x + d.radius_px > w || y + d.radius_px > h {
                return Err(SimError::InvalidScene("distractor outside the sensor".into()));
            }
        }
        Ok(table)
    }
}

/// Ground-truth line crossing recorded in the scene metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingTruth {
    pub led_id: String,
    pub p0: [f64; 2],
    pub p1: [f64; 2],
    pub t_start_us: u64,
    /// `None` when the trajectory never crosses the segment.
    pub t_cross_us: Option<f64>,
}

impl CrossingTruth {
    pub fn line_spec(&self) -> crate::timing::LineSpec {
        crate::timing::LineSpec::new(self.p0.into(), self.p1.into(), self.led_id.clone(), self.t_start_us)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetadata {
    pub name: String,
    pub seed: u64,
    pub duration_us: u64,
    pub led_hash: String,
    #[serde(default)]
    pub crossings: Vec<CrossingTruth>,
    #[serde(default)]
    pub occlusions: Vec<Occlusion>,
}

impl SceneMetadata {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("metadata serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        Ok(toml::from_str(text)?)
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub stream: EventStream,
    pub truth: GroundTruthLabels,
    pub metadata: SceneMetadata,
    pub leds: LedTable,
}

/// First time after `t_start` at which `trajectory` crosses the segment
/// `p0`–`p1`, located by scanning at 50 µs and bisecting.
pub fn analytic_crossing(trajectory: &Trajectory, line: &FinishLine, t_end_us: u64) -> Option<f64> {
    let (ax, ay) = (line.p0[0], line.p0[1]);
    let (dx, dy) = (line.p1[0] - ax, line.p1[1] - ay);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return None;
    }
    let side = |t: f64| {
        let (x, y) = trajectory.position(t);
        dx * (y - ay) - dy * (x - ax)
    };
    let along = |t: f64| {
        let (x, y) = trajectory.position(t);
        ((x - ax) * dx + (y - ay) * dy) / len2
    };
    let step = 50.0;
    let mut t = line.t_start_us as f64;
    let mut s_prev = side(t);
    while t < t_end_us as f64 {
        let t_next = (t + step).min(t_end_us as f64);
        let s_next = side(t_next);
        if s_prev == 0.0 || s_prev.signum() != s_next.signum() {
            let (mut lo, mut hi) = (t, t_next);
            if s_prev != 0.0 {
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if side(mid).signum() == s_prev.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
            } else {
                hi = lo;
            }
            let u = along(hi);
            if (0.0..=1.0).contains(&u) {
                return Some(if s_prev == 0.0 { lo } else { 0.5 * (lo + hi) });
            }
        }
        if t_next >= t_end_us as f64 {
            break;
        }
        t = t_next;
        s_prev = s_next;
    }
    None
}

fn sample_disc(rng: &mut ChaCha8Rng, radius: f64) -> (f64, f64) {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = TAU * rng.random::<f64>();
    (r * theta.cos(), r * theta.sin())
}

struct Emitter<'a> {
    scene: &'a SceneConfig,
    events: Vec<Event>,
}

impl Emitter<'_> {
    #[inline]
    fn pixel(&self, x: f64, y: f64) -> (u16, u16) {
        let px = x.round().clamp(0.0, f64::from(self.scene.sensor_width - 1));
        let py = y.round().clamp(0.0, f64::from(self.scene.sensor_height - 1));
        (px as u16, py as u16)
    }

    /// One burst of `count` events around `(x, y)` at edge time `t_edge`.
    #[allow(clippy::too_many_arguments)]
    fn burst(
        &mut self,
        rng: &mut ChaCha8Rng,
        t_edge: u64,
        (x, y): (f64, f64),
        radius: f64,
        count: u32,
        polarity: Polarity,
        occluded_id: Option<&str>,
    ) {
        let jitter = i64::from(self.scene.jitter_us);
        let t_max = self.scene.duration_us as i64 - 1;
        for _ in 0..count {
            let j = if jitter > 0 { rng.random_range(-jitter..=jitter) } else { 0 };
            let (ox, oy) = sample_disc(rng, radius);
            let t = (t_edge as i64 + j).clamp(0, t_max) as u64;
            if let Some(id) = occluded_id {
                if self.scene.is_occluded(id, t) {
                    continue;
                }
            }
            let (px, py) = self.pixel(x + ox, y + oy);
            self.events.push(Event::new(t, px, py, polarity));
        }
    }
}

/// Renders a scene into an event stream with paired ground truth.
pub fn simulate(scene: &SceneConfig) -> Result<SimOutput, SimError> {
    let table = scene.validate()?;
    let duration = scene.duration_us;
    let latency = u64::from(scene.off_latency_us);
    let mut emitter = Emitter { scene, events: Vec::new() };
    let mut stream_id = 0u64;
    let mut next_rng = || {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
        rng.set_stream(stream_id);
        stream_id += 1;
        rng
    };

    let edge_estimate: u64 = scene
        .leds
        .iter()
        .map(|l| 2 * duration / u64::from(l.led.period_us()).max(1) + 2)
        .sum();
    emitter.events.reserve((edge_estimate * u64::from(scene.events_per_edge)) as usize);

    for l in &scene.leds {
        let mut rng = next_rng();
        let reflections: Vec<&Reflection> = scene.reflections.iter().filter(|r| r.led_id == l.led.id).collect();
        for edge in blink_edges(&l.led, 0, duration) {
            let (t, polarity) = match edge.edge {
                Edge::On => (edge.t, Polarity::Positive),
                Edge::Off => (edge.t + latency, Polarity::Negative),
            };
            if t >= duration {
                continue;
            }
            let pos = l.trajectory.position(t as f64);
            emitter.burst(&mut rng, t, pos, scene.led_radius_px, scene.events_per_edge, polarity, Some(&l.led.id));
            for r in &reflections {
                if r.t_begin_us <= t && t < r.t_end_us {
                    let mirrored = (pos.0 + r.offset[0], pos.1 + r.offset[1]);
                    emitter.burst(&mut rng, t, mirrored, scene.led_radius_px, scene.events_per_edge, polarity, Some(&l.led.id));
                }
            }
        }
    }

    for d in &scene.distractors {
        let mut rng = next_rng();
        let lamp = LedConfig::new("distractor", d.on_time_us.max(1), d.off_time_us.max(1));
        let end = d.t_end_us.min(duration);
        if d.t_begin_us >= end {
            continue;
        }
        for edge in blink_edges_with_phase(&lamp, 0, d.t_begin_us, end) {
            let polarity = if edge.edge == Edge::On { Polarity::Positive } else { Polarity::Negative };
            let pos = (d.position[0], d.position[1]);
            emitter.burst(&mut rng, edge.t, pos, d.radius_px, scene.events_per_edge, polarity, None);
        }
    }

    if scene.noise_rate > 0.0 {
        let mut rng = next_rng();
        let pixels = f64::from(scene.sensor_width) * f64::from(scene.sensor_height);
        let per_chunk = scene.noise_rate * pixels * 1e-3;
        let poisson = Poisson::new(per_chunk).map_err(|e| SimError::InvalidScene(format!("noise rate: {e}")))?;
        for chunk in 0..duration.div_ceil(1000) {
            let t0 = chunk * 1000;
            let t1 = (t0 + 1000).min(duration);
            let mut n = poisson.sample(&mut rng) as u64;
            if t1 - t0 < 1000 {
                // Thin the last partial chunk.
                n = (0..n).filter(|_| rng.random_range(0..1000) < t1 - t0).count() as u64;
            }
            for _ in 0..n {
                let t = rng.random_range(t0..t1);
                let x = rng.random_range(0..scene.sensor_width);
                let y = rng.random_range(0..scene.sensor_height);
                let polarity = if rng.random::<bool>() { Polarity::Positive } else { Polarity::Negative };
                emitter.events.push(Event::new(t, x, y, polarity));
            }
        }
    }

    let mut events = emitter.events;
    events.sort_unstable_by_key(|e| (u128::from(e.t) << 33) | (u128::from(e.y) << 17) | (u128::from(e.x) << 1) | e.polarity as u128);
    let header = StreamHeader {
        sensor_width: scene.sensor_width,
        sensor_height: scene.sensor_height,
        t_start: 0,
        t_end: duration,
        event_count: events.len() as u64,
    };
    let stream = EventStream::new(header, events).expect("simulator output is valid");

    let ticks = (0..scene.tick_count() as u64)
        .map(|k| {
            let t_mid = (k * 1000 + 500) as f64;
            scene
                .leds
                .iter()
                .map(|l| {
                    let (x, y) = l.trajectory.position(t_mid);
                    let visible = !scene.occludes_interval(&l.led.id, k * 1000, (k + 1) * 1000);
                    TruthPoint { x, y, visible }
                })
                .collect()
        })
        .collect();
    let truth = GroundTruthLabels { led_ids: table.ids(), led_hash: table.hash(), t0_ms: 0, ticks };

    let crossings = scene
        .lines
        .iter()
        .map(|line| {
            let traj = &scene.leds[table.index_of(&line.led_id).unwrap()].trajectory;
            CrossingTruth {
                led_id: line.led_id.clone(),
                p0: line.p0,
                p1: line.p1,
                t_start_us: line.t_start_us,
                t_cross_us: analytic_crossing(traj, line, duration),
            }
        })
        .collect();
    let metadata = SceneMetadata {
        name: scene.name.clone(),
        seed: scene.seed,
        duration_us: duration,
        led_hash: table.hash(),
        crossings,
        occlusions: scene.occlusions.clone(),
    };
    Ok(SimOutput { stream, truth, metadata, leds: table })
}
