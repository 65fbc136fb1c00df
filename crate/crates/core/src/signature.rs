//! Blink-signature decoding: polarity sub-windows, smoothing, run statistics
//! and outlier rejection.

use thiserror::Error;

use crate::event::{Event, Polarity};
use crate::led::LedConfig;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SignatureError {
    #[error("no events to classify")]
    EmptyInput,
    #[error("sub-window width must be at least 1 µs")]
    ZeroSubwindow,
    #[error("smoothing kernel must be odd, got {0}")]
    EvenKernel(usize),
    #[error("signature needs complete runs of both polarities, got {changes} polarity changes")]
    InsufficientTransitions { changes: usize },
    #[error("LED table is empty")]
    EmptyLedTable,
}

/// One sub-window: its majority class and the earliest event of each
/// polarity inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub class: Polarity,
    pub first_pos: Option<u64>,
    pub first_neg: Option<u64>,
}

impl Slot {
    fn first_of(&self, polarity: Polarity) -> Option<u64> {
        match polarity {
            Polarity::Positive => self.first_pos,
            Polarity::Negative => self.first_neg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub polarity: Polarity,
    pub start_t: u64,
    pub end_t: u64,
}

impl Run {
    pub fn len_us(&self) -> u64 {
        self.end_t - self.start_t
    }
}

/// Sub-window classes over a cluster's time span, tiled from its first
/// event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolaritySequence {
    pub subwindow_us: u64,
    pub t0: u64,
    pub slots: Vec<Slot>,
}

impl PolaritySequence {
    pub fn t_end(&self) -> u64 {
        self.t0 + self.slots.len() as u64 * self.subwindow_us
    }

    pub fn classes(&self) -> impl Iterator<Item = Polarity> + '_ {
        self.slots.iter().map(|s| s.class)
    }

    /// Adjacent same-class sub-windows merged into runs. A run starts at the
    /// earliest event of its polarity within its first sub-window (the
    /// sub-window start if there is none) and ends where the next begins.
    pub fn runs(&self) -> Vec<Run> {
        let mut starts: Vec<(Polarity, u64)> = Vec::new();
        for (k, slot) in self.slots.iter().enumerate() {
            if starts.last().is_some_and(|&(p, _)| p == slot.class) {
                continue;
            }
            let slot_start = self.t0 + k as u64 * self.subwindow_us;
            let t = slot.first_of(slot.class).unwrap_or(slot_start);
            let t = starts.last().map_or(t, |&(_, prev)| t.max(prev));
            starts.push((slot.class, t));
        }
        let end = self.t_end();
        starts
            .iter()
            .enumerate()
            .map(|(i, &(polarity, start_t))| Run {
                polarity,
                start_t,
                end_t: starts.get(i + 1).map_or(end, |&(_, t)| t),
            })
            .collect()
    }

    pub fn polarity_changes(&self) -> usize {
        self.slots.windows(2).filter(|w| w[0].class != w[1].class).count()
    }
}

/// Tiles the events' time span with `subwindow_us` sub-windows starting at
/// the first event and classifies each by majority polarity. Ties, including
/// empty sub-windows, carry the previous class; a leading tie is Negative.
pub fn polarity_sequence(events: &[Event], subwindow_us: u64) -> Result<PolaritySequence, SignatureError> {
    if subwindow_us == 0 {
        return Err(SignatureError::ZeroSubwindow);
    }
    let (first, last) = match (events.first(), events.last()) {
        (Some(f), Some(l)) => (f.t, l.t),
        _ => return Err(SignatureError::EmptyInput),
    };
    let n = ((last - first) / subwindow_us + 1) as usize;
    let mut counts = vec![(0u32, 0u32); n];
    let mut slots = vec![Slot { class: Polarity::Negative, first_pos: None, first_neg: None }; n];
    for e in events {
        let k = ((e.t - first) / subwindow_us) as usize;
        let slot = &mut slots[k];
        match e.polarity {
            Polarity::Positive => {
                counts[k].0 += 1;
                slot.first_pos = Some(slot.first_pos.map_or(e.t, |t| t.min(e.t)));
            }
            Polarity::Negative => {
                counts[k].1 += 1;
                slot.first_neg = Some(slot.first_neg.map_or(e.t, |t| t.min(e.t)));
            }
        }
    }
    let mut prev = Polarity::Negative;
    for (slot, &(pos, neg)) in slots.iter_mut().zip(&counts) {
        slot.class = match pos.cmp(&neg) {
            std::cmp::Ordering::Greater => Polarity::Positive,
            std::cmp::Ordering::Less => Polarity::Negative,
            std::cmp::Ordering::Equal => prev,
        };
        prev = slot.class;
    }
    Ok(PolaritySequence { subwindow_us, t0: first, slots })
}

/// Centred majority vote over `kernel_width` sub-windows; ties keep the
/// sub-window's own class. The window is clipped at the sequence ends.
pub fn smooth(seq: &PolaritySequence, kernel_width: usize) -> Result<PolaritySequence, SignatureError> {
    if kernel_width.is_multiple_of(2) {
        return Err(SignatureError::EvenKernel(kernel_width));
    }
    if kernel_width == 1 {
        return Ok(seq.clone());
    }
    let half = kernel_width / 2;
    let n = seq.slots.len();
    // Prefix sums of Positive classes.
    let mut prefix = vec![0usize; n + 1];
    for (i, s) in seq.slots.iter().enumerate() {
        prefix[i + 1] = prefix[i] + usize::from(s.class == Polarity::Positive);
    }
    let slots = seq
        .slots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let pos = prefix[hi] - prefix[lo];
            let neg = (hi - lo) - pos;
            let class = match pos.cmp(&neg) {
                std::cmp::Ordering::Greater => Polarity::Positive,
                std::cmp::Ordering::Less => Polarity::Negative,
                std::cmp::Ordering::Equal => s.class,
            };
            Slot { class, ..*s }
        })
        .collect();
    Ok(PolaritySequence { slots, ..*seq })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterSignature {
    pub mean_on_us: f64,
    pub mean_off_us: f64,
    /// Always `mean_on_us + mean_off_us`.
    pub period_us: f64,
    /// Mean gap between successive Positive-run onsets.
    pub period_pos_us: f64,
    /// Mean gap between successive Negative-run onsets.
    pub period_neg_us: f64,
    /// Complete runs that contributed to the on/off means.
    pub sample_count: usize,
}

impl ClusterSignature {
    pub fn new(mean_on_us: f64, mean_off_us: f64, period_pos_us: f64, period_neg_us: f64, sample_count: usize) -> Self {
        Self {
            mean_on_us,
            mean_off_us,
            period_us: mean_on_us + mean_off_us,
            period_pos_us,
            period_neg_us,
            sample_count,
        }
    }

    /// The signature an ideal LED would produce.
    pub fn nominal(led: &LedConfig) -> Self {
        let period = f64::from(led.period_us());
        Self::new(f64::from(led.on_time_us), f64::from(led.off_time_us), period, period, 0)
    }
}

/// Run statistics of `seq`. The first and last runs are partial and are
/// left out of the on/off means; periods are measured between the onsets of
/// every run after the first.
pub fn estimate_signature(seq: &PolaritySequence) -> Result<ClusterSignature, SignatureError> {
    estimate_from_runs(&seq.runs())
}

pub fn estimate_from_runs(runs: &[Run]) -> Result<ClusterSignature, SignatureError> {
    let changes = runs.len().saturating_sub(1);
    let insufficient = SignatureError::InsufficientTransitions { changes };
    if changes < 2 {
        return Err(insufficient);
    }
    let interior = &runs[1..runs.len() - 1];
    let mean_len = |p: Polarity| {
        let (sum, n) = interior
            .iter()
            .filter(|r| r.polarity == p)
            .fold((0u64, 0usize), |(s, n), r| (s + r.len_us(), n + 1));
        (n > 0).then(|| sum as f64 / n as f64).map(|m| (m, n))
    };
    let onset_period = |p: Polarity| {
        let mut onsets = runs[1..].iter().filter(|r| r.polarity == p).map(|r| r.start_t);
        let first = onsets.next()?;
        let (last, gaps) = onsets.fold((first, 0usize), |(_, n), t| (t, n + 1));
        (gaps > 0).then(|| (last - first) as f64 / gaps as f64)
    };
    let (Some((on, n_on)), Some((off, n_off)), Some(tp), Some(tn)) = (
        mean_len(Polarity::Positive),
        mean_len(Polarity::Negative),
        onset_period(Polarity::Positive),
        onset_period(Polarity::Negative),
    ) else {
        return Err(insufficient);
    };
    Ok(ClusterSignature::new(on, off, tp, tn, n_on + n_off))
}

/// Decodes a cluster's events in one go. Equivalent to
/// `estimate_signature(&smooth(&polarity_sequence(events, w)?, k)?)` with
/// fewer passes and allocations.
pub fn decode(events: &[Event], subwindow_us: u64, kernel_width: usize) -> Result<ClusterSignature, SignatureError> {
    if subwindow_us == 0 {
        return Err(SignatureError::ZeroSubwindow);
    }
    let (first, last) = match (events.first(), events.last()) {
        (Some(f), Some(l)) => (f.t, l.t),
        _ => return Err(SignatureError::EmptyInput),
    };
    if kernel_width.is_multiple_of(2) {
        return Err(SignatureError::EvenKernel(kernel_width));
    }
    let n = ((last - first) / subwindow_us + 1) as usize;
    let mut balance = vec![0i32; n];
    // Earliest Negative and Positive offset from `first` per sub-window.
    let mut earliest = vec![[u64::MAX; 2]; n];
    for e in events {
        let off = e.t - first;
        let k = (off / subwindow_us) as usize;
        let b = e.polarity.bit() as usize;
        balance[k] += if b == 1 { 1 } else { -1 };
        earliest[k][b] = earliest[k][b].min(off);
    }
    let mut classes = Vec::with_capacity(n);
    let mut prev = false;
    for &b in &balance {
        prev = if b == 0 { prev } else { b > 0 };
        classes.push(prev);
    }
    let half = kernel_width / 2;
    let smoothed: Vec<bool> = if half == 0 {
        classes
    } else {
        let mut out = Vec::with_capacity(n);
        let mut pos = classes[..half.min(n)].iter().filter(|&&c| c).count();
        for i in 0..n {
            if i + half < n {
                pos += usize::from(classes[i + half]);
            }
            if i > half {
                pos -= usize::from(classes[i - half - 1]);
            }
            let width = (i + half + 1).min(n) - i.saturating_sub(half);
            out.push(match (2 * pos).cmp(&width) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => classes[i],
            });
        }
        out
    };
    let mut runs: Vec<Run> = Vec::new();
    for (k, &c) in smoothed.iter().enumerate() {
        if runs.last().is_some_and(|r| (r.polarity == Polarity::Positive) == c) {
            continue;
        }
        let slot_off = k as u64 * subwindow_us;
        let e = earliest[k][usize::from(c)];
        let t = first + if e == u64::MAX { slot_off } else { e };
        let t = runs.last().map_or(t, |r| t.max(r.start_t));
        if let Some(r) = runs.last_mut() {
            r.end_t = t;
        }
        let polarity = if c { Polarity::Positive } else { Polarity::Negative };
        runs.push(Run { polarity, start_t: t, end_t: 0 });
    }
    if let Some(r) = runs.last_mut() {
        r.end_t = first + n as u64 * subwindow_us;
    }
    estimate_from_runs(&runs)
}

/// Largest relative deviation of `sig` from `led` over on-time, off-time and
/// period.
pub fn relative_deviation(sig: &ClusterSignature, led: &LedConfig) -> f64 {
    let on = f64::from(led.on_time_us);
    let off = f64::from(led.off_time_us);
    let period = f64::from(led.period_us());
    ((sig.mean_on_us - on).abs() / on)
        .max((sig.mean_off_us - off).abs() / off)
        .max((sig.period_us - period).abs() / period)
}

/// True when `sig` deviates by more than `rel_tol` from every LED. A
/// deviation exactly at the tolerance is kept.
pub fn is_outlier(sig: &ClusterSignature, leds: &[LedConfig], rel_tol: f64) -> Result<bool, SignatureError> {
    if leds.is_empty() {
        return Err(SignatureError::EmptyLedTable);
    }
    let best = leds.iter().map(|l| relative_deviation(sig, l)).fold(f64::INFINITY, f64::min);
    Ok(best > rel_tol)
}
