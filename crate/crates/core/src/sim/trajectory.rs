use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

/// Parametric 2D path in pixels. Times inside the variants are milliseconds;
/// [`Trajectory::position`] takes microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    Static { x: f64, y: f64 },
    /// Piecewise-linear through `[t_ms, x, y]` points, held constant outside.
    Waypoints { points: Vec<[f64; 3]> },
    Sinusoid { center: [f64; 2], amplitude: [f64; 2], period_ms: f64, phase: [f64; 2] },
    /// End of a swinging rod: angle `amplitude_rad · sin(2π t / period + phase)`
    /// measured from straight down.
    Pendulum { pivot: [f64; 2], length: f64, amplitude_rad: f64, period_ms: f64, phase: f64 },
}

impl Trajectory {
    pub fn position(&self, t_us: f64) -> (f64, f64) {
        let t_ms = t_us / 1000.0;
        match self {
            Trajectory::Static { x, y } => (*x, *y),
            Trajectory::Waypoints { points } => waypoint_position(points, t_ms),
            Trajectory::Sinusoid { center, amplitude, period_ms, phase } => {
                let w = TAU * t_ms / period_ms;
                (center[0] + amplitude[0] * (w + phase[0]).sin(), center[1] + amplitude[1] * (w + phase[1]).sin())
            }
            Trajectory::Pendulum { pivot, length, amplitude_rad, period_ms, phase } => {
                let angle = amplitude_rad * (TAU * t_ms / period_ms + phase).sin();
                (pivot[0] + length * angle.sin(), pivot[1] + length * angle.cos())
            }
        }
    }
}

fn waypoint_position(points: &[[f64; 3]], t_ms: f64) -> (f64, f64) {
    match points {
        [] => (f64::NAN, f64::NAN),
        [p] => (p[1], p[2]),
        _ => {
            let first = points[0];
            let last = points[points.len() - 1];
            if t_ms <= first[0] {
                return (first[1], first[2]);
            }
            if t_ms >= last[0] {
                return (last[1], last[2]);
            }
            let i = points.partition_point(|p| p[0] <= t_ms);
            let (a, b) = (points[i - 1], points[i]);
            let u = if b[0] > a[0] { (t_ms - a[0]) / (b[0] - a[0]) } else { 1.0 };
            (a[1] + u * (b[1] - a[1]), a[2] + u * (b[2] - a[2]))
        }
    }
}
