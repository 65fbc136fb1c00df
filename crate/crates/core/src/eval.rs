//! Precision/recall of predicted labels against ground truth, and the
//! ablation table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::annotate::{annotate_stream, AnnotateError};
use crate::config::PipelineConfig;
use crate::event::EventStream;
use crate::labels::{GroundTruthLabels, LabelSet};
use crate::led::LedTable;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions [{pred_t0}, {pred_t1}) ms and ground truth [{gt_t0}, {gt_t1}) ms do not overlap")]
    EmptyOverlap { pred_t0: u64, pred_t1: u64, gt_t0: u64, gt_t1: u64 },
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrReport {
    /// `tp / (tp + fp)`; `None` without predictions.
    pub precision: Option<f64>,
    /// `detected / (detected + fn)`; `None` without visible ground truth.
    pub recall: Option<f64>,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Visible ground-truth joints with some prediction within tolerance.
    pub detected: u64,
    pub tolerance_px: f64,
    pub per_led: BTreeMap<String, Counts>,
}

impl PrReport {
    pub fn precision_or_zero(&self) -> f64 {
        self.precision.unwrap_or(0.0)
    }

    pub fn recall_or_zero(&self) -> f64 {
        self.recall.unwrap_or(0.0)
    }

    /// Sums counts from several reports (same tolerance assumed).
    pub fn merge<'a>(reports: impl IntoIterator<Item = &'a PrReport>) -> PrReport {
        let mut out = PrReport::from_counts(0, 0, 0, 0, 0.0, BTreeMap::new());
        for r in reports {
            out.tp += r.tp;
            out.fp += r.fp;
            out.fn_ += r.fn_;
            out.detected += r.detected;
            out.tolerance_px = r.tolerance_px;
            for (id, c) in &r.per_led {
                let e = out.per_led.entry(id.clone()).or_default();
                e.tp += c.tp;
                e.fp += c.fp;
                e.fn_ += c.fn_;
            }
        }
        PrReport::from_counts(out.tp, out.fp, out.fn_, out.detected, out.tolerance_px, out.per_led)
    }

    fn from_counts(tp: u64, fp: u64, fn_: u64, detected: u64, tolerance_px: f64, per_led: BTreeMap<String, Counts>) -> Self {
        let ratio = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
        Self { precision: ratio(tp, tp + fp), recall: ratio(detected, detected + fn_), tp, fp, fn_, detected, tolerance_px, per_led }
    }
}

/// Scores `pred` against `gt` over their common ticks.
///
/// A prediction is a true positive when the same LED is visible in the
/// ground truth within `tol_px`, otherwise a false positive (including
/// predictions while the LED is hidden). A visible ground-truth joint counts
/// as detected when any prediction at that tick lies within `tol_px`, and as
/// a false negative otherwise.
pub fn precision_recall(pred: &LabelSet, gt: &GroundTruthLabels, tol_px: f64) -> Result<PrReport, EvalError> {
    let t0 = pred.t0_ms.max(gt.t0_ms);
    let t1 = pred.t_end_ms().min(gt.t_end_ms());
    if t0 >= t1 {
        return Err(EvalError::EmptyOverlap {
            pred_t0: pred.t0_ms,
            pred_t1: pred.t_end_ms(),
            gt_t0: gt.t0_ms,
            gt_t1: gt.t_end_ms(),
        });
    }
    let tol2 = tol_px * tol_px;
    let index: BTreeMap<&str, usize> = gt.led_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut per_led: BTreeMap<String, Counts> = gt.led_ids.iter().map(|id| (id.clone(), Counts::default())).collect();
    let (mut tp, mut fp, mut fn_, mut detected) = (0u64, 0u64, 0u64, 0u64);
    let mut points: Vec<(f64, f64)> = Vec::new();
    for t in t0..t1 {
        let frame = pred.frame(t).expect("tick in prediction range");
        let row = &gt.ticks[(t - gt.t0_ms) as usize];
        points.clear();
        for (id, j) in &frame.joints {
            points.push((j.x, j.y));
            let hit = index.get(id.as_str()).is_some_and(|&i| {
                let g = row[i];
                g.visible && (j.x - g.x).powi(2) + (j.y - g.y).powi(2) <= tol2
            });
            let c = per_led.entry(id.clone()).or_default();
            if hit {
                tp += 1;
                c.tp += 1;
            } else {
                fp += 1;
                c.fp += 1;
            }
        }
        for (id, g) in gt.led_ids.iter().zip(row) {
            if !g.visible {
                continue;
            }
            if points.iter().any(|&(x, y)| (x - g.x).powi(2) + (y - g.y).powi(2) <= tol2) {
                detected += 1;
            } else {
                fn_ += 1;
                per_led.get_mut(id).expect("gt id").fn_ += 1;
            }
        }
    }
    Ok(PrReport::from_counts(tp, fp, fn_, detected, tol_px, per_led))
}

/// Pipeline switches removed for one ablation row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AblationFlags {
    pub no_time_distance: bool,
    pub no_period_distance: bool,
    pub no_outlier_filter: bool,
    pub no_tracking: bool,
}

impl AblationFlags {
    pub const COMPLETE: Self =
        Self { no_time_distance: false, no_period_distance: false, no_outlier_filter: false, no_tracking: false };

    /// The four single-component ablations.
    pub fn singles() -> [Self; 4] {
        let c = Self::COMPLETE;
        [
            Self { no_time_distance: true, ..c },
            Self { no_period_distance: true, ..c },
            Self { no_outlier_filter: true, ..c },
            Self { no_tracking: true, ..c },
        ]
    }

    pub fn apply(&self, base: &PipelineConfig) -> PipelineConfig {
        let mut cfg = base.clone();
        if self.no_time_distance {
            cfg.alpha = 0.0;
        }
        if self.no_period_distance {
            cfg.beta = 0.0;
        }
        if self.no_outlier_filter {
            cfg.outlier_filter = false;
        }
        if self.no_tracking {
            cfg.tracking = false;
        }
        cfg
    }

    pub fn name(&self) -> String {
        let mut parts = Vec::new();
        if self.no_time_distance {
            parts.push("no_time_distance");
        }
        if self.no_period_distance {
            parts.push("no_period_distance");
        }
        if self.no_outlier_filter {
            parts.push("no_outlier_filter");
        }
        if self.no_tracking {
            parts.push("no_tracking");
        }
        if parts.is_empty() {
            "complete".to_owned()
        } else {
            parts.join("+")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub name: String,
    pub flags: AblationFlags,
    pub report: PrReport,
}

/// Annotates `stream` once per flag set, plus the complete pipeline first.
pub fn ablation_run(
    stream: &EventStream,
    gt: &GroundTruthLabels,
    leds: &LedTable,
    base: &PipelineConfig,
    flags: &[AblationFlags],
    tol_px: f64,
) -> Result<Vec<AblationRow>, EvalError> {
    let mut rows = Vec::with_capacity(flags.len() + 1);
    for f in std::iter::once(&AblationFlags::COMPLETE).chain(flags.iter().filter(|f| **f != AblationFlags::COMPLETE)) {
        let labels = annotate_stream(stream, leds, &f.apply(base))?.labels;
        rows.push(AblationRow { name: f.name(), flags: *f, report: precision_recall(&labels, gt, tol_px)? });
    }
    Ok(rows)
}

/// Fixed-width text table of ablation rows.
pub fn format_table(rows: &[AblationRow]) -> String {
    let mut s = format!("{:<22} {:>10} {:>10} {:>10} {:>10} {:>10}\n", "configuration", "precision", "recall", "tp", "fp", "fn");
    for r in rows {
        let pct = |v: Option<f64>| v.map_or("n/a".to_owned(), |v| format!("{:.4}", v));
        let _ = writeln!(
            s,
            "{:<22} {:>10} {:>10} {:>10} {:>10} {:>10}",
            r.name,
            pct(r.report.precision),
            pct(r.report.recall),
            r.report.tp,
            r.report.fp,
            r.report.fn_
        );
    }
    s
}
