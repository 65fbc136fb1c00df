//! Review sessions: an immutable stream, LED table and auto labels plus an
//! append-only correction log.
//!
//! Directory layout:
//!
//! ```text
//! session.toml       id and provenance hashes
//! stream.fevt        events
//! leds.toml          LED table
//! labels.flbl        auto labels
//! config.toml        pipeline config the labels were made with
//! frames.idx         per-millisecond event offsets
//! corrections.jsonl  correction log
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use flashcap_core::annotate::FrameResult;
use flashcap_core::event::{read_event_file, write_event_file, EventStream, StreamHeader};
use flashcap_core::labels::LabelError;
use flashcap_core::led::LedError;
use flashcap_core::{
    apply_corrections, Annotator, ConfigError, Correction, CorrectionAction, CorrectionError, CorrectionSet, EventError,
    LabelSet, LedTable, PipelineConfig,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const INDEX_MAGIC: &[u8; 4] = b"FIDX";
const INDEX_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("not a session directory: {0}")]
    NotASession(PathBuf),
    #[error("labels were made for LED table {labels}, session table is {table}")]
    LedMismatch { labels: String, table: String },
    #[error("tick {t_ms} outside [{t0_ms}, {t_end_ms})")]
    UnknownTick { t_ms: u64, t0_ms: u64, t_end_ms: u64 },
    #[error("unknown LED {0:?}")]
    UnknownLed(String),
    #[error("no cluster {cluster} at tick {t_ms}")]
    UnknownCluster { t_ms: u64, cluster: usize },
    #[error("bad range: {0}")]
    BadRange(String),
    #[error("frame index: {0}")]
    BadIndex(String),
    #[error("corrections conflict with version {version}")]
    Conflict { version: u64, conflicts: Vec<(u64, String)> },
    #[error("session.toml: {0}")]
    Manifest(String),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Led(#[from] LedError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Correction(#[from] CorrectionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SessionError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub id: String,
    pub led_hash: String,
    pub config_hash: String,
}

/// Event offsets per millisecond tick: tick `t0_ms + k` owns events
/// `offsets[k]..offsets[k + 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameIndex {
    pub t0_ms: u64,
    pub offsets: Vec<u64>,
}

impl FrameIndex {
    pub fn build(stream: &EventStream) -> Self {
        let h = stream.header();
        let t0_ms = h.t_start / 1000;
        let t_end_ms = h.t_end.div_ceil(1000).max(t0_ms);
        let events = stream.events();
        let mut offsets = Vec::with_capacity((t_end_ms - t0_ms + 1) as usize);
        let mut cursor = 0;
        for t_ms in t0_ms..=t_end_ms {
            cursor += events[cursor..].partition_point(|e| e.t < t_ms * 1000);
            offsets.push(cursor as u64);
        }
        *offsets.last_mut().unwrap() = events.len() as u64;
        Self { t0_ms, offsets }
    }

    pub fn ticks(&self) -> std::ops::Range<u64> {
        self.t0_ms..self.t0_ms + self.offsets.len() as u64 - 1
    }

    pub fn range(&self, t_ms: u64) -> Option<std::ops::Range<usize>> {
        let k = t_ms.checked_sub(self.t0_ms)? as usize;
        Some(*self.offsets.get(k)? as usize..*self.offsets.get(k + 1)? as usize)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(22 + 8 * self.offsets.len());
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&self.t0_ms.to_le_bytes());
        out.extend_from_slice(&(self.offsets.len() as u64).to_le_bytes());
        for o in &self.offsets {
            out.extend_from_slice(&o.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| SessionError::BadIndex(m.into());
        if bytes.len() < 22 || &bytes[..4] != INDEX_MAGIC {
            return Err(bad("bad magic"));
        }
        if u16::from_le_bytes([bytes[4], bytes[5]]) != INDEX_VERSION {
            return Err(bad("unsupported version"));
        }
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let (t0_ms, n) = (u64_at(6), u64_at(14) as usize);
        if n == 0 || bytes.len() != 22 + 8 * n {
            return Err(bad("length mismatch"));
        }
        let offsets: Vec<u64> = (0..n).map(|k| u64_at(22 + 8 * k)).collect();
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(bad("offsets not monotone"));
        }
        Ok(Self { t0_ms, offsets })
    }
}

/// Per-pixel polarity counts of one tick, run-length encoded in row-major
/// pixel order. Each run is `[first_pixel, length, positive, negative]` and
/// pixels outside every run have no events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Raster {
    pub t_ms: u64,
    pub event_count: usize,
    pub runs: Vec<[u64; 4]>,
}

/// Mutable half of a session, guarded by the service's single writer.
#[derive(Debug)]
pub struct Corrections {
    pub log: CorrectionSet,
    /// Log length after the last record that targeted each `(t_ms, led_id)`.
    touched: HashMap<(u64, String), u64>,
    centroids: HashMap<(u64, usize), Option<(f64, f64)>>,
    pub merged: LabelSet,
}

impl Corrections {
    pub fn version(&self) -> u64 {
        self.log.len() as u64
    }
}

#[derive(Debug)]
pub struct Session {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub stream: EventStream,
    pub leds: LedTable,
    pub labels: LabelSet,
    pub config: PipelineConfig,
    pub index: FrameIndex,
}

fn session_id(leds: &LedTable, labels_text: &str, header: &StreamHeader) -> String {
    let mut h = Sha256::new();
    h.update(leds.hash().as_bytes());
    h.update(labels_text.as_bytes());
    h.update(format!("{header:?}").as_bytes());
    hex::encode(h.finalize())[..16].to_owned()
}

/// Writes a session directory from its inputs and precomputes the frame index.
pub fn create(
    dir: impl AsRef<Path>,
    stream: &EventStream,
    leds: &LedTable,
    labels: &LabelSet,
    config: &PipelineConfig,
) -> Result<Manifest> {
    let dir = dir.as_ref();
    if labels.led_hash != leds.hash() {
        return Err(SessionError::LedMismatch { labels: labels.led_hash.clone(), table: leds.hash() });
    }
    fs::create_dir_all(dir)?;
    write_event_file(dir.join("stream.fevt"), stream)?;
    fs::write(dir.join("leds.toml"), leds.to_toml())?;
    let labels_text = labels.to_flbl();
    fs::write(dir.join("labels.flbl"), &labels_text)?;
    fs::write(dir.join("config.toml"), config.to_toml())?;
    fs::write(dir.join("frames.idx"), FrameIndex::build(stream).to_bytes())?;
    let manifest = Manifest {
        id: session_id(leds, &labels_text, stream.header()),
        led_hash: leds.hash(),
        config_hash: labels.config_hash.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| SessionError::Manifest(e.to_string()))?;
    fs::write(dir.join("session.toml"), text)?;
    Ok(manifest)
}

impl Session {
    /// Opens a session directory, rebuilding `frames.idx` when it is missing
    /// or does not fit the stream.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest_path = dir.join("session.toml");
        if !manifest_path.is_file() {
            return Err(SessionError::NotASession(dir));
        }
        let manifest: Manifest =
            toml::from_str(&fs::read_to_string(&manifest_path)?).map_err(|e| SessionError::Manifest(e.to_string()))?;
        let stream = read_event_file(dir.join("stream.fevt"))?;
        let leds = LedTable::load(dir.join("leds.toml"))?;
        let labels = LabelSet::load(dir.join("labels.flbl"))?;
        let config = PipelineConfig::load(dir.join("config.toml"))?;
        if labels.led_hash != leds.hash() {
            return Err(SessionError::LedMismatch { labels: labels.led_hash, table: leds.hash() });
        }
        let index_path = dir.join("frames.idx");
        let fresh = || FrameIndex::build(&stream);
        let index = match fs::read(&index_path).map_err(SessionError::from).and_then(|b| FrameIndex::from_bytes(&b)) {
            Ok(index) if index == fresh() => index,
            _ => {
                log::warn!("rebuilding {}", index_path.display());
                let index = fresh();
                fs::write(&index_path, index.to_bytes())?;
                index
            }
        };
        Ok(Self { dir, manifest, stream, leds, labels, config, index })
    }

    pub fn corrections_path(&self) -> PathBuf {
        self.dir.join("corrections.jsonl")
    }

    fn check_tick(&self, t_ms: u64, ticks: std::ops::Range<u64>) -> Result<()> {
        if ticks.contains(&t_ms) {
            Ok(())
        } else {
            Err(SessionError::UnknownTick { t_ms, t0_ms: ticks.start, t_end_ms: ticks.end })
        }
    }

    pub fn label_ticks(&self) -> std::ops::Range<u64> {
        self.labels.t0_ms..self.labels.t_end_ms()
    }

    /// Event rasters for ticks `[t0_ms, t1_ms)`.
    pub fn rasters(&self, t0_ms: u64, t1_ms: u64) -> Result<Vec<Raster>> {
        if t1_ms <= t0_ms {
            return Err(SessionError::BadRange(format!("t1_ms {t1_ms} must exceed t0_ms {t0_ms}")));
        }
        let ticks = self.index.ticks();
        self.check_tick(t0_ms, ticks.clone())?;
        let width = u64::from(self.stream.header().sensor_width);
        let mut pixels: Vec<(u64, bool)> = Vec::new();
        let mut out = Vec::with_capacity((t1_ms - t0_ms) as usize);
        for t_ms in t0_ms..t1_ms.min(ticks.end) {
            let events = &self.stream.events()[self.index.range(t_ms).expect("tick in index")];
            pixels.clear();
            pixels.extend(events.iter().map(|e| (u64::from(e.y) * width + u64::from(e.x), e.polarity.bit() == 1)));
            pixels.sort_unstable();
            let mut counts: Vec<[u64; 3]> = Vec::new();
            for &(pixel, positive) in &pixels {
                match counts.last_mut() {
                    Some(c) if c[0] == pixel => c[if positive { 1 } else { 2 }] += 1,
                    _ => counts.push([pixel, u64::from(positive), u64::from(!positive)]),
                }
            }
            let mut runs: Vec<[u64; 4]> = Vec::new();
            for [pixel, pos, neg] in counts {
                match runs.last_mut() {
                    Some(r) if r[0] + r[1] == pixel && r[2] == pos && r[3] == neg => r[1] += 1,
                    _ => runs.push([pixel, 1, pos, neg]),
                }
            }
            out.push(Raster { t_ms, event_count: events.len(), runs });
        }
        Ok(out)
    }

    /// Pipeline state for tick `t_ms`, from a replay of the frames within
    /// `history_us + coast_limit_us` before it.
    pub fn frame_result(&self, t_ms: u64) -> Result<FrameResult> {
        self.check_tick(t_ms, self.label_ticks())?;
        let h = self.stream.header();
        let frame_us = self.config.frame_us;
        let target = (t_ms * 1000 + 500).saturating_sub(h.t_start) / frame_us;
        let warm = (self.config.history_us + self.config.coast_limit_us).div_ceil(frame_us);
        let first = target.saturating_sub(warm);
        let t_start = h.t_start + first * frame_us;
        let t_end = (h.t_start + (target + 1) * frame_us).min(h.t_end).max(t_start);
        let events = self.stream.window(t_start, t_end).to_vec();
        let header = StreamHeader { t_start, t_end, event_count: events.len() as u64, ..*h };
        let replay = EventStream::new(header, events)?;
        let mut annotator = Annotator::new(&self.leds, self.config.clone()).map_err(|e| match e {
            flashcap_core::AnnotateError::Config(c) => SessionError::Config(c),
            other => SessionError::BadRange(other.to_string()),
        })?;
        let mut last = None;
        for frame in replay.frames(frame_us)? {
            last = Some(annotator.step(&frame));
        }
        last.ok_or(SessionError::UnknownTick { t_ms, t0_ms: self.labels.t0_ms, t_end_ms: self.labels.t_end_ms() })
    }

    pub fn centroid(&self, t_ms: u64, cluster: usize) -> Result<Option<(f64, f64)>> {
        Ok(self.frame_result(t_ms)?.clusters.get(cluster).map(|c| c.centroid))
    }

    /// Loads the correction log and builds the merged label view.
    pub fn load_corrections(&self) -> Result<Corrections> {
        let log = CorrectionSet::load(self.corrections_path())?;
        let mut state = Corrections {
            log: CorrectionSet::default(),
            touched: HashMap::new(),
            centroids: HashMap::new(),
            merged: self.labels.clone(),
        };
        self.extend(&mut state, log.records)?;
        Ok(state)
    }

    fn validate(&self, state: &mut Corrections, records: &[Correction]) -> Result<()> {
        for r in records {
            if self.leds.index_of(&r.led_id).is_none() {
                return Err(SessionError::UnknownLed(r.led_id.clone()));
            }
            self.check_tick(r.t_ms, self.label_ticks())?;
            if let CorrectionAction::Reassign { cluster } = r.action {
                let key = (r.t_ms, cluster);
                if let std::collections::hash_map::Entry::Vacant(e) = state.centroids.entry(key) {
                    let c = self.centroid(r.t_ms, cluster)?;
                    e.insert(c);
                }
                if state.centroids[&key].is_none() {
                    return Err(SessionError::UnknownCluster { t_ms: r.t_ms, cluster });
                }
            }
        }
        Ok(())
    }

    fn extend(&self, state: &mut Corrections, records: Vec<Correction>) -> Result<()> {
        self.validate(state, &records)?;
        for r in records {
            state.log.records.push(r.clone());
            state.touched.insert((r.t_ms, r.led_id), state.log.len() as u64);
        }
        let centroids = &state.centroids;
        state.merged = apply_corrections(&self.labels, &state.log, |t, c| centroids.get(&(t, c)).copied().flatten())?;
        Ok(())
    }

    /// Appends `records` to the log. With `base_version`, any record whose
    /// `(t_ms, led_id)` was written after that version is a conflict and
    /// nothing is written.
    pub fn submit(&self, state: &mut Corrections, base_version: Option<u64>, records: Vec<Correction>) -> Result<u64> {
        if let Some(base) = base_version {
            let version = state.version();
            let mut conflicts: Vec<(u64, String)> = records
                .iter()
                .filter(|r| base > version || state.touched.get(&(r.t_ms, r.led_id.clone())).is_some_and(|&v| v > base))
                .map(|r| (r.t_ms, r.led_id.clone()))
                .collect();
            conflicts.sort();
            conflicts.dedup();
            if !conflicts.is_empty() {
                return Err(SessionError::Conflict { version, conflicts });
            }
        }
        self.validate(state, &records)?;
        CorrectionSet::append_to(self.corrections_path(), &records)?;
        self.extend(state, records)?;
        Ok(state.version())
    }
}
