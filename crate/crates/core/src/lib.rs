//! Labels blinking-LED body markers in event-camera streams.
//!
//! The pipeline slices a stream into 1 ms frames, finds dense event clusters,
//! decodes each cluster's on/off blink signature, matches clusters to a
//! configured LED table with an optimal assignment, and tracks LEDs through
//! dropouts. A seeded simulator provides streams with exact ground truth.

pub mod annotate;
pub mod cluster;
pub mod config;
pub mod corrections;
pub mod eval;
pub mod event;
pub mod labels;
pub mod led;
pub mod matcher;
pub mod signature;
pub mod sim;
pub mod timing;

pub use annotate::{annotate_stream, AnnotateError, Annotation, Annotator, Diagnostics, FrameResult};
pub use cluster::{centroid, dbscan, Cluster, ClusterError, Clusterer, Dbscan};
pub use config::{ConfigError, PipelineConfig};
pub use corrections::{apply_corrections, Correction, CorrectionAction, CorrectionError, CorrectionSet};
pub use eval::{ablation_run, format_table, precision_recall, AblationFlags, AblationRow, EvalError, PrReport};
pub use event::{partition_into_frames, read_event_stream, write_event_stream, Event, EventError, EventFrame, EventStream, Polarity, StreamHeader};
pub use labels::{GroundTruthLabels, Joint, LabelError, LabelFrame, LabelSet, Source, TruthPoint};
pub use led::{LedConfig, LedError, LedTable};
pub use matcher::{assign, combined_distance, gate_costs, period_distance, time_distance, track_update, Assignment, CostMatrix, LedTrack, MatchError, Pair, TrackState, TrackStatus};
pub use signature::{decode, estimate_signature, is_outlier, polarity_sequence, smooth, ClusterSignature, PolaritySequence, Run, SignatureError};
pub use sim::{blink_edges, scenario, simulate, CrossingTruth, SceneConfig, SceneLed, SimError, SimOutput, Trajectory};
pub use timing::{detect_crossing, timing_error, trajectory_from_labels, LineSpec, Sample, TimingError};
