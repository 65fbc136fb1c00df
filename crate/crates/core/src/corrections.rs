//! Human corrections to automatic labels.
//!
//! Corrections form an append-only log stored as JSON lines. For each
//! `(t_ms, led_id)` only the latest record in log order counts.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{Joint, LabelSet, Source};

#[derive(Debug, Error)]
pub enum CorrectionError {
    #[error("unknown LED {0:?}")]
    UnknownLed(String),
    #[error("tick {t_ms} outside the labelled range [{t0_ms}, {t_end_ms})")]
    TickOutOfRange { t_ms: u64, t0_ms: u64, t_end_ms: u64 },
    #[error("no cluster {cluster} at tick {t_ms}")]
    UnknownCluster { t_ms: u64, cluster: usize },
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorrectionAction {
    Move { x: f64, y: f64 },
    /// Place the joint at the centroid of cluster `cluster` (index into the
    /// tick's cluster list).
    Reassign { cluster: usize },
    Delete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub t_ms: u64,
    pub led_id: String,
    pub action: CorrectionAction,
    #[serde(default)]
    pub author: String,
    /// Unix milliseconds.
    #[serde(default)]
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrectionSet {
    pub records: Vec<Correction>,
}

impl CorrectionSet {
    pub fn new(records: Vec<Correction>) -> Self {
        Self { records }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// The surviving record per `(t_ms, led_id)`.
    pub fn effective(&self) -> BTreeMap<(u64, &str), &Correction> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            out.insert((r.t_ms, r.led_id.as_str()), r);
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("correction serializes"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Self, CorrectionError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(line).map_err(|source| CorrectionError::Parse { line: i + 1, source })?);
        }
        Ok(Self { records })
    }

    /// Reads a log; a missing file is an empty log.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorrectionError> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_jsonl(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e.into()),
        }
    }

    /// Appends records to the log file at `path`.
    pub fn append_to(path: impl AsRef<Path>, records: &[Correction]) -> Result<(), CorrectionError> {
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        let mut buf = String::new();
        for r in records {
            buf.push_str(&serde_json::to_string(r).expect("correction serializes"));
            buf.push('\n');
        }
        f.write_all(buf.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }
}

/// Applies the effective corrections to a copy of `labels`. `resolve` maps
/// `(t_ms, cluster)` to that cluster's centroid for Reassign. Applying the
/// same set twice gives the same result as applying it once.
pub fn apply_corrections<R>(labels: &LabelSet, corrections: &CorrectionSet, mut resolve: R) -> Result<LabelSet, CorrectionError>
where
    R: FnMut(u64, usize) -> Option<(f64, f64)>,
{
    let mut out = labels.clone();
    for ((t_ms, led_id), record) in corrections.effective() {
        if !labels.led_ids.iter().any(|id| id == led_id) {
            return Err(CorrectionError::UnknownLed(led_id.to_owned()));
        }
        let (t0_ms, t_end_ms) = (out.t0_ms, out.t_end_ms());
        let frame = out.frame_mut(t_ms).ok_or(CorrectionError::TickOutOfRange { t_ms, t0_ms, t_end_ms })?;
        match record.action {
            CorrectionAction::Move { x, y } => {
                frame.joints.insert(led_id.to_owned(), Joint { x, y, source: Source::Corrected });
            }
            CorrectionAction::Reassign { cluster } => {
                let (x, y) = resolve(t_ms, cluster).ok_or(CorrectionError::UnknownCluster { t_ms, cluster })?;
                frame.joints.insert(led_id.to_owned(), Joint { x, y, source: Source::Corrected });
            }
            CorrectionAction::Delete => {
                frame.joints.remove(led_id);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> LabelSet {
        let mut set = LabelSet::empty(vec!["wrist".into(), "knee".into()], "h".into(), "c".into(), 40, 10);
        set.frame_mut(42).unwrap().joints.insert("wrist".into(), Joint { x: 1.0, y: 2.0, source: Source::Auto });
        set
    }

    fn rec(t_ms: u64, led: &str, action: CorrectionAction) -> Correction {
        Correction { t_ms, led_id: led.into(), action, author: "ann".into(), created_at: 0 }
    }

    fn none(_: u64, _: usize) -> Option<(f64, f64)> {
        None
    }

    #[test]
    fn move_replaces_label() {
        let set = CorrectionSet::new(vec![rec(42, "wrist", CorrectionAction::Move { x: 100.0, y: 50.0 })]);
        let out = apply_corrections(&labels(), &set, none).unwrap();
        assert_eq!(out.frame(42).unwrap().joints["wrist"], Joint { x: 100.0, y: 50.0, source: Source::Corrected });
    }

    #[test]
    fn empty_set_is_identity() {
        assert_eq!(apply_corrections(&labels(), &CorrectionSet::default(), none).unwrap(), labels());
    }

    #[test]
    fn later_record_wins() {
        let set = CorrectionSet::new(vec![
            rec(42, "wrist", CorrectionAction::Delete),
            rec(42, "wrist", CorrectionAction::Move { x: 3.0, y: 4.0 }),
        ]);
        let out = apply_corrections(&labels(), &set, none).unwrap();
        assert_eq!(out.frame(42).unwrap().joints["wrist"].x, 3.0);
        let set = CorrectionSet::new(set.records.into_iter().rev().collect());
        assert!(!apply_corrections(&labels(), &set, none).unwrap().frame(42).unwrap().joints.contains_key("wrist"));
    }

    #[test]
    fn reassign_uses_resolver() {
        let set = CorrectionSet::new(vec![rec(45, "knee", CorrectionAction::Reassign { cluster: 2 })]);
        let out = apply_corrections(&labels(), &set, |t, c| (t == 45 && c == 2).then_some((7.5, 8.5))).unwrap();
        assert_eq!(out.frame(45).unwrap().joints["knee"].y, 8.5);
        assert!(matches!(apply_corrections(&labels(), &set, none), Err(CorrectionError::UnknownCluster { .. })));
    }

    #[test]
    fn errors_name_the_problem() {
        let unknown = CorrectionSet::new(vec![rec(42, "elbow", CorrectionAction::Delete)]);
        assert!(matches!(apply_corrections(&labels(), &unknown, none), Err(CorrectionError::UnknownLed(_))));
        let late = CorrectionSet::new(vec![rec(50, "wrist", CorrectionAction::Delete)]);
        assert!(matches!(apply_corrections(&labels(), &late, none), Err(CorrectionError::TickOutOfRange { .. })));
    }

    #[test]
    fn idempotent_and_round_trips() {
        let set = CorrectionSet::new(vec![
            rec(42, "wrist", CorrectionAction::Move { x: 9.0, y: 9.0 }),
            rec(43, "knee", CorrectionAction::Move { x: 1.0, y: 1.0 }),
            rec(43, "knee", CorrectionAction::Delete),
        ]);
        let once = apply_corrections(&labels(), &set, none).unwrap();
        assert_eq!(apply_corrections(&once, &set, none).unwrap(), once);
        assert_eq!(CorrectionSet::from_jsonl(&set.to_jsonl()).unwrap(), set);
    }
}
