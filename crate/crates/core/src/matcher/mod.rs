//! Cluster-to-LED matching: signature distances, gated cost matrices,
//! optimal assignment and per-LED tracking.

mod hungarian;
mod tracking;

use thiserror::Error;

use crate::led::LedConfig;
use crate::signature::ClusterSignature;

pub use hungarian::assign;
pub use tracking::{track_update, LedTrack, TrackState, TrackStatus};

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("alpha and beta are both zero")]
    BothWeightsZero,
    #[error("weights must be finite and non-negative (alpha {alpha}, beta {beta})")]
    InvalidWeights { alpha: f64, beta: f64 },
    #[error("cost matrix needs {expected} entries, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("cost entry ({row}, {col}) is {value}; costs must be non-negative")]
    InvalidCost { row: usize, col: usize, value: f64 },
}

/// On/off time distance: `|t̄p − tp| + |t̄n − tn|`.
pub fn time_distance(sig: &ClusterSignature, led: &LedConfig) -> f64 {
    (sig.mean_on_us - f64::from(led.on_time_us)).abs() + (sig.mean_off_us - f64::from(led.off_time_us)).abs()
}

/// Period distance: `|Tn − T| + |Tp − T|`.
pub fn period_distance(sig: &ClusterSignature, led: &LedConfig) -> f64 {
    let period = f64::from(led.period_us());
    (sig.period_neg_us - period).abs() + (sig.period_pos_us - period).abs()
}

pub fn check_weights(alpha: f64, beta: f64) -> Result<(), MatchError> {
    if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(MatchError::InvalidWeights { alpha, beta });
    }
    if alpha == 0.0 && beta == 0.0 {
        return Err(MatchError::BothWeightsZero);
    }
    Ok(())
}

/// `alpha · time_distance + beta · period_distance`.
pub fn combined_distance(sig: &ClusterSignature, led: &LedConfig, alpha: f64, beta: f64) -> Result<f64, MatchError> {
    check_weights(alpha, beta)?;
    Ok(weighted(sig, led, alpha, beta))
}

#[inline]
fn weighted(sig: &ClusterSignature, led: &LedConfig, alpha: f64, beta: f64) -> f64 {
    let mut d = 0.0;
    if alpha != 0.0 {
        d += alpha * time_distance(sig, led);
    }
    if beta != 0.0 {
        d += beta * period_distance(sig, led);
    }
    d
}

/// Row-major clusters × LEDs costs. Entries above `d_max` are inadmissible;
/// `f64::INFINITY` marks an entry forbidden outright.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    costs: Vec<f64>,
    pub d_max: f64,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, costs: Vec<f64>, d_max: f64) -> Result<Self, MatchError> {
        if costs.len() != rows * cols {
            return Err(MatchError::ShapeMismatch { expected: rows * cols, got: costs.len() });
        }
        if let Some(k) = costs.iter().position(|c| !(*c >= 0.0)) {
            return Err(MatchError::InvalidCost { row: k / cols.max(1), col: k % cols.max(1), value: costs[k] });
        }
        Ok(Self { rows, cols, costs, d_max })
    }

    pub fn from_rows(rows: &[Vec<f64>], d_max: f64) -> Result<Self, MatchError> {
        let cols = rows.first().map_or(0, Vec::len);
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), cols, flat, d_max)
    }

    /// Costs of every signature against every LED. Rows whose signature is
    /// missing are entirely forbidden.
    pub fn from_signatures(
        sigs: &[Option<ClusterSignature>],
        leds: &[LedConfig],
        alpha: f64,
        beta: f64,
        d_max: f64,
    ) -> Result<Self, MatchError> {
        check_weights(alpha, beta)?;
        let mut costs = Vec::with_capacity(sigs.len() * leds.len());
        for sig in sigs {
            match sig {
                Some(sig) => costs.extend(leds.iter().map(|l| weighted(sig, l, alpha, beta))),
                None => costs.extend(std::iter::repeat_n(f64::INFINITY, leds.len())),
            }
        }
        Self::new(sigs.len(), leds.len(), costs, d_max)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.costs[row * self.cols + col]
    }

    pub fn forbid(&mut self, row: usize, col: usize) {
        self.costs[row * self.cols + col] = f64::INFINITY;
    }

    #[inline]
    pub fn is_admissible(&self, row: usize, col: usize) -> bool {
        let c = self.get(row, col);
        c.is_finite() && c <= self.d_max
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.costs[row * self.cols..(row + 1) * self.cols]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub cluster: usize,
    pub led: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    /// Sorted by cluster index.
    pub pairs: Vec<Pair>,
    pub unmatched_clusters: Vec<usize>,
    pub unmatched_leds: Vec<usize>,
}

impl Assignment {
    pub fn total_cost(&self) -> f64 {
        self.pairs.iter().map(|p| p.cost).sum()
    }

    pub fn led_for_cluster(&self, cluster: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.cluster == cluster).map(|p| p.led)
    }

    pub fn cluster_for_led(&self, led: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.led == led).map(|p| p.cluster)
    }
}

/// Forbids pairs whose cluster centroid lies farther than `spatial_gate_px`
/// from an Active or Coasting LED's predicted position. Lost LEDs are left
/// ungated.
pub fn gate_costs(cost: &CostMatrix, state: &TrackState, centroids: &[(f64, f64)], now_us: u64, spatial_gate_px: f64) -> CostMatrix {
    let mut gated = cost.clone();
    let gate2 = spatial_gate_px * spatial_gate_px;
    for (led, track) in state.leds.iter().enumerate().take(cost.cols()) {
        let Some((px, py)) = track.predicted(now_us) else {
            continue;
        };
        for (row, &(cx, cy)) in centroids.iter().enumerate().take(cost.rows()) {
            let d2 = (cx - px).powi(2) + (cy - py).powi(2);
            if d2 > gate2 {
                gated.forbid(row, led);
            }
        }
    }
    gated
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(on: f64, off: f64, tp: f64, tn: f64) -> ClusterSignature {
        ClusterSignature::new(on, off, tp, tn, 10)
    }

    #[test]
    fn time_distance_examples() {
        let led = LedConfig::new("a", 150, 250);
        assert_eq!(time_distance(&sig(150.0, 250.0, 400.0, 400.0), &led), 0.0);
        assert_eq!(time_distance(&sig(160.0, 240.0, 400.0, 400.0), &led), 20.0);
        assert_eq!(time_distance(&sig(140.0, 260.0, 400.0, 400.0), &led), 20.0);
    }

    #[test]
    fn period_distance_examples() {
        let led = LedConfig::new("a", 150, 250);
        assert_eq!(period_distance(&sig(150.0, 250.0, 400.0, 400.0), &led), 0.0);
        assert_eq!(period_distance(&sig(150.0, 250.0, 400.0, 410.0), &led), 10.0);
        // Equal period, swapped duty: period blind, time distance not.
        let swapped = LedConfig::new("b", 250, 150);
        let s = ClusterSignature::nominal(&led);
        assert_eq!(period_distance(&s, &swapped), 0.0);
        assert_eq!(time_distance(&s, &swapped), 200.0);
    }

    #[test]
    fn combined_distance_examples() {
        let led = LedConfig::new("a", 150, 250);
        let s = sig(160.0, 240.0, 400.0, 410.0);
        assert_eq!(combined_distance(&s, &led, 1.0, 0.5), Ok(25.0));
        assert_eq!(combined_distance(&s, &led, 1.0, 0.0), Ok(20.0));
        assert_eq!(combined_distance(&s, &led, 0.0, 1.0), Ok(10.0));
        assert_eq!(combined_distance(&s, &led, 0.0, 0.0), Err(MatchError::BothWeightsZero));
        assert!(matches!(combined_distance(&s, &led, -1.0, 1.0), Err(MatchError::InvalidWeights { .. })));
    }

    #[test]
    fn cost_matrix_validation() {
        assert!(matches!(CostMatrix::new(2, 2, vec![0.0; 3], 1.0), Err(MatchError::ShapeMismatch { .. })));
        assert!(matches!(CostMatrix::new(1, 2, vec![0.0, -1.0], 1.0), Err(MatchError::InvalidCost { col: 1, .. })));
        let m = CostMatrix::from_rows(&[vec![1.0, f64::INFINITY]], 5.0).unwrap();
        assert!(m.is_admissible(0, 0) && !m.is_admissible(0, 1));
    }

    #[test]
    fn missing_signature_rows_are_forbidden() {
        let leds = [LedConfig::new("a", 150, 250)];
        let m = CostMatrix::from_signatures(&[None, Some(ClusterSignature::nominal(&leds[0]))], &leds, 1.0, 0.5, 200.0).unwrap();
        assert_eq!(m.get(0, 0), f64::INFINITY);
        assert_eq!(m.get(1, 0), 0.0);
    }
}
