//! Tuning knobs for the annotation pipeline.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("alpha and beta are both zero")]
    BothWeightsZero,
    #[error("parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub frame_us: u64,
    pub eps_px: f64,
    pub min_pts: usize,
    pub subwindow_us: u64,
    pub smoothing_kernel: usize,
    /// Span of events kept per cluster track for signature estimation.
    pub history_us: u64,
    pub outlier_rel_tol: f64,
    pub alpha: f64,
    pub beta: f64,
    pub d_max: f64,
    pub spatial_gate_px: f64,
    pub coast_limit_us: u64,
    /// Weight of the newest finite difference in the velocity estimate.
    pub velocity_smoothing: f64,
    /// Largest centroid jump between frames that still continues a cluster track.
    pub link_radius_px: f64,
    pub emit_coasted: bool,
    pub outlier_filter: bool,
    pub tracking: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            frame_us: 1000,
            eps_px: 3.0,
            min_pts: 5,
            subwindow_us: 25,
            smoothing_kernel: 3,
            history_us: 10_000,
            outlier_rel_tol: 0.5,
            alpha: 1.0,
            beta: 0.5,
            d_max: 200.0,
            spatial_gate_px: 20.0,
            coast_limit_us: 100_000,
            velocity_smoothing: 0.5,
            link_radius_px: 6.0,
            emit_coasted: false,
            outlier_filter: true,
            tracking: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_owned()));
        if self.alpha < 0.0 || self.beta < 0.0 || !self.alpha.is_finite() || !self.beta.is_finite() {
            return bad("alpha and beta must be finite and non-negative");
        }
        if self.alpha == 0.0 && self.beta == 0.0 {
            return Err(ConfigError::BothWeightsZero);
        }
        if self.frame_us == 0 || self.subwindow_us == 0 {
            return bad("frame_us and subwindow_us must be at least 1");
        }
        if !(self.eps_px > 0.0) || self.min_pts == 0 {
            return bad("eps_px must be positive and min_pts at least 1");
        }
        if self.smoothing_kernel.is_multiple_of(2) {
            return bad("smoothing_kernel must be odd");
        }
        if !(self.outlier_rel_tol > 0.0) {
            return bad("outlier_rel_tol must be positive");
        }
        if self.d_max.is_nan() || self.d_max < 0.0 {
            return bad("d_max must be non-negative");
        }
        if !(self.spatial_gate_px >= 0.0) || !(self.link_radius_px >= 0.0) {
            return bad("gates must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.velocity_smoothing) {
            return bad("velocity_smoothing must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}
