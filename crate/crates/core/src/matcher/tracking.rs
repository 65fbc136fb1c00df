use serde::Serialize;

use super::Assignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Active,
    Coasting,
    Lost,
}

/// Motion state of one LED.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedTrack {
    /// Current estimate: the last observation, or its extrapolation while coasting.
    pub position: (f64, f64),
    pub last_observed: (f64, f64),
    /// Pixels per millisecond.
    pub velocity: (f64, f64),
    pub last_seen: Option<u64>,
    pub status: TrackStatus,
    /// False until a finite difference has been taken since the last loss.
    pub has_velocity: bool,
}

impl Default for LedTrack {
    fn default() -> Self {
        Self {
            position: (0.0, 0.0),
            last_observed: (0.0, 0.0),
            velocity: (0.0, 0.0),
            last_seen: None,
            status: TrackStatus::Lost,
            has_velocity: false,
        }
    }
}

impl LedTrack {
    /// Constant-velocity prediction at `now_us`; `None` for Lost tracks.
    pub fn predicted(&self, now_us: u64) -> Option<(f64, f64)> {
        if self.status == TrackStatus::Lost {
            return None;
        }
        let dt_ms = now_us.saturating_sub(self.last_seen?) as f64 / 1000.0;
        Some((self.last_observed.0 + self.velocity.0 * dt_ms, self.last_observed.1 + self.velocity.1 * dt_ms))
    }

    fn lose(&mut self) {
        self.status = TrackStatus::Lost;
        self.velocity = (0.0, 0.0);
        self.has_velocity = false;
    }
}

/// Per-LED tracks, indexed like the LED table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackState {
    pub leds: Vec<LedTrack>,
    pub coast_limit_us: u64,
    /// Weight of the newest finite difference in the velocity estimate.
    pub velocity_smoothing: f64,
}

impl TrackState {
    pub fn new(led_count: usize, coast_limit_us: u64, velocity_smoothing: f64) -> Self {
        Self { leds: vec![LedTrack::default(); led_count], coast_limit_us, velocity_smoothing }
    }

    /// Folds one frame's assignment into the tracks. `centroids[k]` is the
    /// position of cluster `k`.
    pub fn update(&mut self, assignment: &Assignment, centroids: &[(f64, f64)], now_us: u64) {
        let mut observed: Vec<Option<(f64, f64)>> = vec![None; self.leds.len()];
        for p in &assignment.pairs {
            if p.led < observed.len() {
                observed[p.led] = Some(centroids[p.cluster]);
            }
        }
        let lambda = self.velocity_smoothing;
        for (track, seen) in self.leds.iter_mut().zip(observed) {
            match seen {
                Some(c) => {
                    match (track.status, track.last_seen) {
                        (TrackStatus::Active | TrackStatus::Coasting, Some(t)) if now_us > t => {
                            let dt_ms = (now_us - t) as f64 / 1000.0;
                            let diff = ((c.0 - track.last_observed.0) / dt_ms, (c.1 - track.last_observed.1) / dt_ms);
                            track.velocity = if track.has_velocity {
                                (
                                    lambda * diff.0 + (1.0 - lambda) * track.velocity.0,
                                    lambda * diff.1 + (1.0 - lambda) * track.velocity.1,
                                )
                            } else {
                                diff
                            };
                            track.has_velocity = true;
                        }
                        (TrackStatus::Lost, _) => {
                            track.velocity = (0.0, 0.0);
                            track.has_velocity = false;
                        }
                        _ => {}
                    }
                    track.position = c;
                    track.last_observed = c;
                    track.last_seen = Some(now_us);
                    track.status = TrackStatus::Active;
                }
                None => {
                    let Some(t) = track.last_seen else { continue };
                    if track.status == TrackStatus::Lost {
                        continue;
                    }
                    if now_us.saturating_sub(t) <= self.coast_limit_us {
                        track.status = TrackStatus::Coasting;
                        track.position = track.predicted(now_us).expect("track is not lost");
                    } else {
                        track.lose();
                    }
                }
            }
        }
    }
}

/// Functional form of [`TrackState::update`].
pub fn track_update(state: &TrackState, assignment: &Assignment, centroids: &[(f64, f64)], now_us: u64) -> TrackState {
    let mut next = state.clone();
    next.update(assignment, centroids, now_us);
    next
}
