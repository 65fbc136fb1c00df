//! Line-crossing times from joint trajectories.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::LabelSet;

#[derive(Debug, Error, PartialEq)]
pub enum TimingError {
    #[error("trajectory never crosses the line after t = {t_start_us} µs")]
    NoCrossing { t_start_us: u64 },
    #[error("line endpoints coincide")]
    DegenerateLine,
    #[error("trajectory is empty")]
    EmptyTrajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    pub p0: (f64, f64),
    pub p1: (f64, f64),
    pub joint: String,
    pub t_start_us: u64,
    /// Only count crossings between the endpoints.
    #[serde(default = "default_bounded")]
    pub bounded: bool,
}

fn default_bounded() -> bool {
    true
}

impl LineSpec {
    pub fn new(p0: (f64, f64), p1: (f64, f64), joint: impl Into<String>, t_start_us: u64) -> Self {
        Self { p0, p1, joint: joint.into(), t_start_us, bounded: true }
    }

    /// Signed perpendicular distance of `(x, y)` from the line.
    pub fn signed_distance(&self, (x, y): (f64, f64)) -> f64 {
        let (dx, dy) = (self.p1.0 - self.p0.0, self.p1.1 - self.p0.1);
        (dx * (y - self.p0.1) - dy * (x - self.p0.0)) / dx.hypot(dy)
    }

    /// Position of the projection of `(x, y)` along the segment, 0 at `p0`
    /// and 1 at `p1`.
    pub fn along(&self, (x, y): (f64, f64)) -> f64 {
        let (dx, dy) = (self.p1.0 - self.p0.0, self.p1.1 - self.p0.1);
        ((x - self.p0.0) * dx + (y - self.p0.1) * dy) / (dx * dx + dy * dy)
    }
}

/// A trajectory sample: time in microseconds and position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t_us: f64,
    pub x: f64,
    pub y: f64,
}

/// First crossing of `line` by the time-ordered `traj` at or after
/// `line.t_start_us`. Consecutive samples on opposite sides bracket the
/// crossing, whose time is interpolated linearly in signed distance; a
/// sample exactly on the line is itself the crossing.
pub fn detect_crossing(traj: &[Sample], line: &LineSpec) -> Result<f64, TimingError> {
    if line.p0 == line.p1 {
        return Err(TimingError::DegenerateLine);
    }
    if traj.is_empty() {
        return Err(TimingError::EmptyTrajectory);
    }
    let within = |s: &Sample| !line.bounded || (0.0..=1.0).contains(&line.along((s.x, s.y)));
    let start = traj.partition_point(|s| s.t_us < line.t_start_us as f64);
    let samples = &traj[start..];
    for (k, s) in samples.iter().enumerate() {
        let d = line.signed_distance((s.x, s.y));
        if d == 0.0 {
            if within(s) {
                return Ok(s.t_us);
            }
            continue;
        }
        let Some(next) = samples.get(k + 1) else { break };
        let dn = line.signed_distance((next.x, next.y));
        if dn != 0.0 && d.signum() != dn.signum() {
            let u = d / (d - dn);
            let hit = Sample {
                t_us: s.t_us + u * (next.t_us - s.t_us),
                x: s.x + u * (next.x - s.x),
                y: s.y + u * (next.y - s.y),
            };
            if within(&hit) {
                return Ok(hit.t_us);
            }
        }
    }
    Err(TimingError::NoCrossing { t_start_us: line.t_start_us })
}

/// `|estimated − reference|` in milliseconds.
pub fn timing_error(estimated_us: f64, reference_us: f64) -> f64 {
    (estimated_us - reference_us).abs() / 1000.0
}

/// A joint's labelled trajectory with each tick placed at its midpoint.
pub fn trajectory_from_labels(labels: &LabelSet, joint: &str) -> Vec<Sample> {
    labels
        .track(joint)
        .into_iter()
        .map(|(t_ms, x, y)| Sample { t_us: t_ms as f64 * 1000.0 + 500.0, x, y })
        .collect()
}

/// Keeps every `step`-th sample, as a lower-rate sensor would see it.
pub fn downsample(traj: &[Sample], step: usize) -> Vec<Sample> {
    traj.iter().step_by(step.max(1)).copied().collect()
}
