//! LED identities and their nominal blink signatures.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Recommended operating range for on- and off-times, in microseconds.
pub const RECOMMENDED_TIMING_US: std::ops::RangeInclusive<u32> = 100..=300;

#[derive(Debug, Error)]
pub enum LedError {
    #[error("LED table is empty")]
    EmptyTable,
    #[error("duplicate LED id {0:?}")]
    DuplicateId(String),
    #[error("LED {id:?}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("parse LED table: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One LED: it is on for `on_time_us`, then off for `off_time_us`, repeating.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LedConfig {
    pub id: String,
    pub on_time_us: u32,
    pub off_time_us: u32,
    #[serde(default)]
    pub body_site: String,
}

impl LedConfig {
    pub fn new(id: impl Into<String>, on_time_us: u32, off_time_us: u32) -> Self {
        let id = id.into();
        Self { body_site: id.clone(), id, on_time_us, off_time_us }
    }

    pub fn period_us(&self) -> u32 {
        self.on_time_us + self.off_time_us
    }

    pub fn in_recommended_range(&self) -> bool {
        RECOMMENDED_TIMING_US.contains(&self.on_time_us)
            && RECOMMENDED_TIMING_US.contains(&self.off_time_us)
    }

    /// Deterministic blink phase in `[0, period)` derived from the id, so
    /// that LEDs are not edge-synchronized.
    pub fn phase_us(&self) -> u64 {
        let digest = Sha256::digest(self.id.as_bytes());
        let h = u64::from_le_bytes(digest[..8].try_into().unwrap());
        h % u64::from(self.period_us())
    }

    fn validate(&self) -> Result<(), LedError> {
        let invalid = |reason: &str| LedError::Invalid { id: self.id.clone(), reason: reason.into() };
        if self.id.is_empty() || self.id.chars().any(char::is_whitespace) {
            return Err(invalid("id must be non-empty and contain no whitespace"));
        }
        if self.on_time_us == 0 || self.off_time_us == 0 {
            return Err(invalid("on and off times must be at least 1 µs"));
        }
        if !self.in_recommended_range() {
            log::warn!(
                "LED {}: timing {}/{} µs outside the recommended {:?} µs range",
                self.id,
                self.on_time_us,
                self.off_time_us,
                RECOMMENDED_TIMING_US
            );
        }
        Ok(())
    }
}

/// An ordered, non-empty set of LEDs with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedTable {
    #[serde(rename = "led")]
    leds: Vec<LedConfig>,
}

impl LedTable {
    pub fn new(leds: Vec<LedConfig>) -> Result<Self, LedError> {
        if leds.is_empty() {
            return Err(LedError::EmptyTable);
        }
        let mut seen = HashSet::new();
        for led in &leds {
            led.validate()?;
            if !seen.insert(led.id.as_str()) {
                return Err(LedError::DuplicateId(led.id.clone()));
            }
        }
        Ok(Self { leds })
    }

    pub fn leds(&self) -> &[LedConfig] {
        &self.leds
    }

    pub fn len(&self) -> usize {
        self.leds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leds.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.leds.iter().position(|l| l.id == id)
    }

    pub fn get(&self, id: &str) -> Option<&LedConfig> {
        self.leds.iter().find(|l| l.id == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.leds.iter().map(|l| l.id.clone()).collect()
    }

    /// Hex SHA-256 over the canonical `id on off site` lines.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for led in &self.leds {
            h.update(format!("{} {} {} {}\n", led.id, led.on_time_us, led.off_time_us, led.body_site));
        }
        hex::encode(h.finalize())
    }

    pub fn from_toml(text: &str) -> Result<Self, LedError> {
        let raw: LedTable = toml::from_str(text)?;
        Self::new(raw.leds)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("LED table serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LedError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// The 17-marker suit: every on/off pair on a 50 µs lattice over
    /// 100..=300 µs, except the four slowest (both ≥ 250) and four fastest
    /// (both ≤ 150) combinations.
    pub fn default_suit() -> Self {
        let mut timings = Vec::new();
        for on in (100..=300).step_by(50) {
            for off in (100..=300).step_by(50) {
                let slow = on >= 250 && off >= 250;
                let fast = on <= 150 && off <= 150;
                if !slow && !fast {
                    timings.push((on, off));
                }
            }
        }
        let leds = BODY_SITES
            .iter()
            .zip(timings)
            .map(|(site, (on, off))| LedConfig::new(*site, on, off))
            .collect();
        Self::new(leds).expect("default suit is valid")
    }
}

/// Seventeen marker sites, head to feet.
pub const BODY_SITES: [&str; 17] = [
    "head",
    "chest",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "pelvis",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
    "left_foot",
    "right_foot",
];
