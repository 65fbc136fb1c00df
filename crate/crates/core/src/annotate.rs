//! End-to-end labelling: frames → clusters → signatures → assignment →
//! tracks → 1 ms joint labels.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::cluster::{dbscan, Cluster};
use crate::config::{ConfigError, PipelineConfig};
use crate::event::{Event, EventError, EventFrame, EventStream, StreamHeader};
use crate::labels::{Joint, LabelSet, Source};
use crate::led::LedTable;
use crate::matcher::{assign, gate_costs, Assignment, CostMatrix, MatchError, TrackState, TrackStatus};
use crate::signature::{decode, is_outlier, ClusterSignature};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Event(#[from] EventError),
}

/// Per-stage counts over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Diagnostics {
    pub frames: u64,
    pub events: u64,
    pub clusters_found: u64,
    /// Clusters whose history held too few transitions for a signature.
    pub undecodable: u64,
    pub outliers_dropped: u64,
    pub matches: u64,
    /// LED-frames spent coasting.
    pub coasts: u64,
    pub labels_emitted: u64,
}

/// Everything computed for one frame.
#[derive(Debug, Clone)]
pub struct FrameResult {
    pub window: (u64, u64),
    pub clusters: Vec<Cluster>,
    /// `None` when the cluster could not be decoded.
    pub signatures: Vec<Option<ClusterSignature>>,
    pub outliers: Vec<bool>,
    /// Signature costs before spatial gating.
    pub costs: CostMatrix,
    pub assignment: Assignment,
    /// Labels keyed by LED id.
    pub joints: BTreeMap<String, Joint>,
}

/// Events of one cluster followed across frames.
#[derive(Debug, Default)]
struct Tracklet {
    centroid: (f64, f64),
    history: VecDeque<Event>,
}

/// Stateful frame-by-frame pipeline.
#[derive(Debug)]
pub struct Annotator<'a> {
    cfg: PipelineConfig,
    leds: &'a LedTable,
    tracks: TrackState,
    tracklets: Vec<Tracklet>,
    diagnostics: Diagnostics,
}

impl<'a> Annotator<'a> {
    pub fn new(leds: &'a LedTable, cfg: PipelineConfig) -> Result<Self, AnnotateError> {
        cfg.validate()?;
        crate::matcher::check_weights(cfg.alpha, cfg.beta)?;
        let tracks = TrackState::new(leds.len(), cfg.coast_limit_us, cfg.velocity_smoothing);
        Ok(Self { cfg, leds, tracks, tracklets: Vec::new(), diagnostics: Diagnostics::default() })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> &TrackState {
        &self.tracks
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.diagnostics
    }

    /// Processes the next frame. Frames must arrive in time order.
    pub fn step(&mut self, frame: &EventFrame<'_>) -> FrameResult {
        let cfg = self.cfg.clone();
        let now = frame.midpoint();
        let clusters = dbscan(frame, cfg.eps_px, cfg.min_pts);
        let centroids: Vec<(f64, f64)> = clusters.iter().map(|c| c.centroid).collect();
        self.diagnostics.frames += 1;
        self.diagnostics.events += frame.events.len() as u64;
        self.diagnostics.clusters_found += clusters.len() as u64;

        if cfg.tracking {
            self.link(&clusters, frame.window_end);
        }
        let mut signatures = Vec::with_capacity(clusters.len());
        let mut outliers = Vec::with_capacity(clusters.len());
        for (k, cluster) in clusters.iter().enumerate() {
            let decoded = if cfg.tracking {
                let history = &mut self.tracklets[k].history;
                decode(history.make_contiguous(), cfg.subwindow_us, cfg.smoothing_kernel)
            } else {
                decode(&cluster.events, cfg.subwindow_us, cfg.smoothing_kernel)
            };
            let sig = match decoded {
                Ok(sig) => Some(sig),
                Err(_) => {
                    self.diagnostics.undecodable += 1;
                    None
                }
            };
            let outlier = cfg.outlier_filter
                && sig.is_some_and(|s| is_outlier(&s, self.leds.leds(), cfg.outlier_rel_tol).unwrap_or(true));
            if outlier {
                self.diagnostics.outliers_dropped += 1;
            }
            outliers.push(outlier);
            signatures.push(sig);
        }

        let admissible: Vec<Option<ClusterSignature>> =
            signatures.iter().zip(&outliers).map(|(s, &o)| if o { None } else { *s }).collect();
        let costs = CostMatrix::from_signatures(&admissible, self.leds.leds(), cfg.alpha, cfg.beta, cfg.d_max)
            .expect("weights validated at construction");
        let assignment = if cfg.tracking {
            assign(&gate_costs(&costs, &self.tracks, &centroids, now, cfg.spatial_gate_px))
        } else {
            assign(&costs)
        };

        let mut joints = BTreeMap::new();
        for p in &assignment.pairs {
            let (x, y) = centroids[p.cluster];
            joints.insert(self.leds.leds()[p.led].id.clone(), Joint { x, y, source: Source::Auto });
        }
        self.diagnostics.matches += assignment.pairs.len() as u64;
        if cfg.tracking {
            self.tracks.update(&assignment, &centroids, now);
            for (led, track) in self.leds.leds().iter().zip(&self.tracks.leds) {
                if track.status == TrackStatus::Coasting {
                    self.diagnostics.coasts += 1;
                    if cfg.emit_coasted {
                        let (x, y) = track.position;
                        joints.insert(led.id.clone(), Joint { x, y, source: Source::Coasted });
                    }
                }
            }
        }
        self.diagnostics.labels_emitted += joints.len() as u64;

        FrameResult {
            window: (frame.window_start, frame.window_end),
            clusters,
            signatures,
            outliers,
            costs,
            assignment,
            joints,
        }
    }

    /// Replaces the tracklets with one per cluster, in cluster order. A
    /// cluster inherits history only when it and a previous cluster are each
    /// other's sole candidate within the link radius; merges and splits start
    /// over.
    fn link(&mut self, clusters: &[Cluster], frame_end: u64) {
        let r2 = self.cfg.link_radius_px * self.cfg.link_radius_px;
        let prev = std::mem::take(&mut self.tracklets);
        let mut prev_hits = vec![0u32; prev.len()];
        let mut candidate: Vec<Option<usize>> = vec![None; clusters.len()];
        let mut cluster_hits = vec![0u32; clusters.len()];
        for (p, t) in prev.iter().enumerate() {
            for (c, cl) in clusters.iter().enumerate() {
                let d2 = (cl.centroid.0 - t.centroid.0).powi(2) + (cl.centroid.1 - t.centroid.1).powi(2);
                if d2 <= r2 {
                    prev_hits[p] += 1;
                    cluster_hits[c] += 1;
                    candidate[c] = Some(p);
                }
            }
        }
        let mut prev = prev.into_iter().map(Some).collect::<Vec<_>>();
        let cutoff = frame_end.saturating_sub(self.cfg.history_us);
        let mut next = Vec::with_capacity(clusters.len());
        for (c, cl) in clusters.iter().enumerate() {
            let inherited = match candidate[c] {
                Some(p) if cluster_hits[c] == 1 && prev_hits[p] == 1 => prev[p].take(),
                _ => None,
            };
            let mut history = inherited.map(|t| t.history).unwrap_or_default();
            history.extend(cl.events.iter().copied());
            while history.front().is_some_and(|e| e.t < cutoff) {
                history.pop_front();
            }
            next.push(Tracklet { centroid: cl.centroid, history });
        }
        self.tracklets = next;
    }
}

/// Labels for a whole stream plus run diagnostics.
#[derive(Debug, Clone)]
pub struct Annotation {
    pub labels: LabelSet,
    pub diagnostics: Diagnostics,
}

/// Millisecond ticks whose midpoints fall inside the header span.
pub fn tick_range(header: &StreamHeader) -> std::ops::Range<u64> {
    let first = header.t_start.saturating_sub(500).div_ceil(1000);
    let end = if header.t_end >= 500 { (header.t_end - 500).div_ceil(1000) } else { 0 };
    first..end.max(first)
}

/// Runs the pipeline over `stream` and resamples the frame labels onto 1 ms
/// ticks: tick `k` takes the labels of the frame containing `k·1000 + 500` µs.
pub fn annotate_stream(stream: &EventStream, leds: &LedTable, cfg: &PipelineConfig) -> Result<Annotation, AnnotateError> {
    let mut annotator = Annotator::new(leds, cfg.clone())?;
    let header = stream.header();
    let frames = stream.frames(cfg.frame_us)?;
    let mut frame_joints = Vec::with_capacity(frames.len());
    for frame in frames {
        frame_joints.push(annotator.step(&frame).joints);
    }
    let ticks = tick_range(header);
    let mut labels = LabelSet::empty(leds.ids(), leds.hash(), cfg.hash(), ticks.start, (ticks.end - ticks.start) as usize);
    for (frame, t_ms) in labels.frames.iter_mut().zip(ticks) {
        let mid = t_ms * 1000 + 500;
        let k = ((mid - header.t_start) / cfg.frame_us) as usize;
        if let Some(j) = frame_joints.get_mut(k) {
            frame.joints = if cfg.frame_us == 1000 { std::mem::take(j) } else { j.clone() };
        }
    }
    Ok(Annotation { labels, diagnostics: annotator.diagnostics() })
}
