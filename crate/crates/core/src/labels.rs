//! Millisecond joint labels and the `.flbl` text format shared by pipeline
//! output and simulator ground truth.
//!
//! ```text
//! # flbl 1
//! # leds <sha256 of LED table>
//! # config <sha256 of pipeline config, or "-">
//! # ticks <first t_ms> <end t_ms, exclusive>
//! # led_ids <id> <id> ...
//! # t_ms led_id x y source
//! 42 left_wrist 530.1250 410.0000 auto
//! ```
//!
//! `source` is one of `auto`, `corrected`, `coasted` for annotations and
//! `truth`, `occluded` for ground truth. Records are ordered by tick, then by
//! LED id.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FLBL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("ground truth is missing LED {led:?} at tick {t_ms}")]
    IncompleteTruth { t_ms: u64, led: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Auto,
    Corrected,
    Coasted,
    Truth,
    Occluded,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Auto => "auto",
            Source::Corrected => "corrected",
            Source::Coasted => "coasted",
            Source::Truth => "truth",
            Source::Occluded => "occluded",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "auto" => Source::Auto,
            "corrected" => Source::Corrected,
            "coasted" => Source::Coasted,
            "truth" => Source::Truth,
            "occluded" => Source::Occluded,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub x: f64,
    pub y: f64,
    pub source: Source,
}

/// Joint labels for one millisecond tick.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelFrame {
    pub t_ms: u64,
    pub joints: BTreeMap<String, Joint>,
}

impl LabelFrame {
    pub fn new(t_ms: u64) -> Self {
        Self { t_ms, joints: BTreeMap::new() }
    }
}

/// A contiguous run of label frames plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub led_ids: Vec<String>,
    pub led_hash: String,
    pub config_hash: String,
    /// One frame per tick, starting at `t0_ms`.
    pub frames: Vec<LabelFrame>,
    pub t0_ms: u64,
}

impl LabelSet {
    pub fn empty(led_ids: Vec<String>, led_hash: String, config_hash: String, t0_ms: u64, ticks: usize) -> Self {
        let frames = (0..ticks as u64).map(|k| LabelFrame::new(t0_ms + k)).collect();
        Self { led_ids, led_hash, config_hash, frames, t0_ms }
    }

    pub fn t_end_ms(&self) -> u64 {
        self.t0_ms + self.frames.len() as u64
    }

    pub fn frame(&self, t_ms: u64) -> Option<&LabelFrame> {
        t_ms.checked_sub(self.t0_ms).and_then(|k| self.frames.get(k as usize))
    }

    pub fn frame_mut(&mut self, t_ms: u64) -> Option<&mut LabelFrame> {
        t_ms.checked_sub(self.t0_ms).and_then(move |k| self.frames.get_mut(k as usize))
    }

    pub fn label_count(&self) -> usize {
        self.frames.iter().map(|f| f.joints.len()).sum()
    }

    /// `(tick, x, y)` samples of one joint in tick order.
    pub fn track(&self, led_id: &str) -> Vec<(u64, f64, f64)> {
        self.frames
            .iter()
            .filter_map(|f| f.joints.get(led_id).map(|j| (f.t_ms, j.x, j.y)))
            .collect()
    }

    pub fn to_flbl(&self) -> String {
        let mut out = String::with_capacity(64 + self.label_count() * 40);
        writeln!(out, "# flbl {FLBL_VERSION}").unwrap();
        writeln!(out, "# leds {}", or_dash(&self.led_hash)).unwrap();
        writeln!(out, "# config {}", or_dash(&self.config_hash)).unwrap();
        writeln!(out, "# ticks {} {}", self.t0_ms, self.t_end_ms()).unwrap();
        writeln!(out, "# led_ids {}", self.led_ids.join(" ")).unwrap();
        out.push_str("# t_ms led_id x y source\n");
        for f in &self.frames {
            for (id, j) in &f.joints {
                writeln!(out, "{} {} {:.4} {:.4} {}", f.t_ms, id, j.x, j.y, j.source.as_str()).unwrap();
            }
        }
        out
    }

    pub fn from_flbl(text: &str) -> Result<Self, LabelError> {
        let mut led_ids = None;
        let mut led_hash = String::new();
        let mut config_hash = String::new();
        let mut ticks = None;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let err = |reason: String| LabelError::Parse { line: lineno, reason };
            if let Some(meta) = line.strip_prefix('#') {
                let mut parts = meta.split_whitespace();
                match parts.next() {
                    Some("flbl") => {
                        let v: u32 = parts
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| err("missing version".into()))?;
                        if v != FLBL_VERSION {
                            return Err(err(format!("unsupported version {v}")));
                        }
                    }
                    Some("leds") => led_hash = from_dash(parts.next().unwrap_or("-")),
                    Some("config") => config_hash = from_dash(parts.next().unwrap_or("-")),
                    Some("ticks") => {
                        let a: Option<u64> = parts.next().and_then(|s| s.parse().ok());
                        let b: Option<u64> = parts.next().and_then(|s| s.parse().ok());
                        match (a, b) {
                            (Some(a), Some(b)) if b >= a => ticks = Some((a, b)),
                            _ => return Err(err("bad ticks line".into())),
                        }
                    }
                    Some("led_ids") => led_ids = Some(parts.map(str::to_owned).collect::<Vec<_>>()),
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(err(format!("expected 5 fields, got {}", fields.len())));
            }
            let t_ms: u64 = fields[0].parse().map_err(|_| err("bad t_ms".into()))?;
            let x: f64 = fields[2].parse().map_err(|_| err("bad x".into()))?;
            let y: f64 = fields[3].parse().map_err(|_| err("bad y".into()))?;
            let source = Source::parse(fields[4]).ok_or_else(|| err(format!("bad source {:?}", fields[4])))?;
            records.push((lineno, t_ms, fields[1].to_owned(), Joint { x, y, source }));
        }
        let (t0, t1) = ticks.ok_or(LabelError::Parse { line: 0, reason: "missing ticks header".into() })?;
        let led_ids = led_ids.ok_or(LabelError::Parse { line: 0, reason: "missing led_ids header".into() })?;
        let mut set = LabelSet::empty(led_ids, led_hash, config_hash, t0, (t1 - t0) as usize);
        for (line, t_ms, id, joint) in records {
            let frame = set
                .frame_mut(t_ms)
                .ok_or_else(|| LabelError::Parse { line, reason: format!("tick {t_ms} outside [{t0}, {t1})") })?;
            if frame.joints.insert(id, joint).is_some() {
                return Err(LabelError::Parse { line, reason: "duplicate (t_ms, led_id) record".into() });
            }
        }
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LabelError> {
        std::fs::write(path, self.to_flbl())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LabelError> {
        Self::from_flbl(&std::fs::read_to_string(path)?)
    }
}

fn or_dash(s: &str) -> &str {
    if s.is_empty() {
        "-"
    } else {
        s
    }
}

fn from_dash(s: &str) -> String {
    if s == "-" {
        String::new()
    } else {
        s.to_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthPoint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

/// Simulator ground truth: one entry per LED per tick.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthLabels {
    pub led_ids: Vec<String>,
    pub led_hash: String,
    pub t0_ms: u64,
    /// `ticks[k][i]` is LED `led_ids[i]` at tick `t0_ms + k`.
    pub ticks: Vec<Vec<TruthPoint>>,
}

impl GroundTruthLabels {
    pub fn t_end_ms(&self) -> u64 {
        self.t0_ms + self.ticks.len() as u64
    }

    pub fn led_index(&self, id: &str) -> Option<usize> {
        self.led_ids.iter().position(|l| l == id)
    }

    pub fn at(&self, t_ms: u64, led_index: usize) -> Option<TruthPoint> {
        let k = t_ms.checked_sub(self.t0_ms)? as usize;
        self.ticks.get(k).and_then(|row| row.get(led_index)).copied()
    }

    pub fn to_label_set(&self) -> LabelSet {
        let mut set = LabelSet::empty(self.led_ids.clone(), self.led_hash.clone(), String::new(), self.t0_ms, self.ticks.len());
        for (frame, row) in set.frames.iter_mut().zip(&self.ticks) {
            for (id, p) in self.led_ids.iter().zip(row) {
                let source = if p.visible { Source::Truth } else { Source::Occluded };
                frame.joints.insert(id.clone(), Joint { x: p.x, y: p.y, source });
            }
        }
        set
    }

    pub fn from_label_set(set: &LabelSet) -> Result<Self, LabelError> {
        let mut ticks = Vec::with_capacity(set.frames.len());
        for f in &set.frames {
            let mut row = Vec::with_capacity(set.led_ids.len());
            for id in &set.led_ids {
                let j = f
                    .joints
                    .get(id)
                    .ok_or_else(|| LabelError::IncompleteTruth { t_ms: f.t_ms, led: id.clone() })?;
                row.push(TruthPoint { x: j.x, y: j.y, visible: j.source != Source::Occluded });
            }
            ticks.push(row);
        }
        Ok(Self { led_ids: set.led_ids.clone(), led_hash: set.led_hash.clone(), t0_ms: set.t0_ms, ticks })
    }

    pub fn to_flbl(&self) -> String {
        self.to_label_set().to_flbl()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LabelError> {
        Self::from_label_set(&LabelSet::load(path)?)
    }
}
