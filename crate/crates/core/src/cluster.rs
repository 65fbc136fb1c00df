//! Density-based clustering of the events in one frame.
//!
//! Distances are spatial only; the frame already bounds time. Events that
//! share a pixel have identical neighbourhoods, so the search runs over
//! distinct pixels weighted by their event counts, which is equivalent to
//! point-level DBSCAN and much cheaper on LED bursts.

use std::collections::VecDeque;

use thiserror::Error;

use crate::event::{Event, EventFrame};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClusterError {
    #[error("cluster has no events")]
    EmptyCluster,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub frame_window: (u64, u64),
    /// Members in input order.
    pub events: Vec<Event>,
    pub centroid: (f64, f64),
    /// `(x_min, y_min, x_max, y_max)`, inclusive.
    pub bbox: (u16, u16, u16, u16),
}

impl Cluster {
    pub fn new(frame_window: (u64, u64), events: Vec<Event>) -> Result<Self, ClusterError> {
        let centroid = centroid(&events)?;
        let mut bbox = (u16::MAX, u16::MAX, 0, 0);
        for e in &events {
            bbox.0 = bbox.0.min(e.x);
            bbox.1 = bbox.1.min(e.y);
            bbox.2 = bbox.2.max(e.x);
            bbox.3 = bbox.3.max(e.y);
        }
        Ok(Self { frame_window, events, centroid, bbox })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Arithmetic mean of the member coordinates.
pub fn centroid(events: &[Event]) -> Result<(f64, f64), ClusterError> {
    if events.is_empty() {
        return Err(ClusterError::EmptyCluster);
    }
    let (sx, sy) = events.iter().fold((0u64, 0u64), |(sx, sy), e| (sx + u64::from(e.x), sy + u64::from(e.y)));
    let n = events.len() as f64;
    Ok((sx as f64 / n, sy as f64 / n))
}

/// Anything that can split a frame into candidate LED regions.
pub trait Clusterer {
    fn cluster(&self, frame: &EventFrame<'_>) -> Vec<Cluster>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dbscan {
    pub eps_px: f64,
    pub min_pts: usize,
}

impl Default for Dbscan {
    fn default() -> Self {
        Self { eps_px: 3.0, min_pts: 5 }
    }
}

impl Clusterer for Dbscan {
    fn cluster(&self, frame: &EventFrame<'_>) -> Vec<Cluster> {
        dbscan(frame, self.eps_px, self.min_pts)
    }
}

const NOISE: u32 = u32::MAX;

#[inline]
fn pixel_key(e: &Event) -> u32 {
    (u32::from(e.x) << 16) | u32::from(e.y)
}

/// Clusters `frame` with the classic core/border/noise semantics: a point is
/// core when at least `min_pts` points (itself included) lie within `eps_px`;
/// clusters are the connected components of core points plus the border
/// points reachable from them. A border point within reach of several
/// clusters joins the one owning its nearest core pixel, ties going to the
/// lowest `(x, y)`. Noise is dropped. Output is sorted by centroid `y`, then
/// `x`.
pub fn dbscan(frame: &EventFrame<'_>, eps_px: f64, min_pts: usize) -> Vec<Cluster> {
    labels_for(frame.events, eps_px, min_pts)
        .map(|(labels, count)| {
            let mut sizes = vec![0usize; count];
            for &l in labels.iter().filter(|&&l| l != NOISE) {
                sizes[l as usize] += 1;
            }
            let mut members: Vec<Vec<Event>> = sizes.into_iter().map(Vec::with_capacity).collect();
            for (e, &l) in frame.events.iter().zip(&labels) {
                if l != NOISE {
                    members[l as usize].push(*e);
                }
            }
            let window = (frame.window_start, frame.window_end);
            let mut clusters: Vec<Cluster> =
                members.into_iter().map(|m| Cluster::new(window, m).expect("clusters are non-empty")).collect();
            clusters.sort_by(|a, b| {
                a.centroid.1.total_cmp(&b.centroid.1).then(a.centroid.0.total_cmp(&b.centroid.0))
            });
            clusters
        })
        .unwrap_or_default()
}

/// Per-event cluster label (`NOISE` for noise) and the cluster count.
fn labels_for(events: &[Event], eps_px: f64, min_pts: usize) -> Option<(Vec<u32>, usize)> {
    if events.is_empty() || !(eps_px > 0.0) {
        return None;
    }
    let min_pts = min_pts.max(1);

    // Distinct pixels in (x, y) order with their event counts.
    let mut order: Vec<u64> =
        events.iter().enumerate().map(|(i, e)| (u64::from(pixel_key(e)) << 32) | i as u64).collect();
    order.sort_unstable();
    let mut keys: Vec<u32> = Vec::new();
    let mut counts: Vec<u32> = Vec::new();
    let mut pixel_of = vec![0u32; events.len()];
    for &packed in &order {
        let (k, i) = ((packed >> 32) as u32, packed as u32);
        if keys.last() != Some(&k) {
            keys.push(k);
            counts.push(0);
        }
        *counts.last_mut().unwrap() += 1;
        pixel_of[i as usize] = (keys.len() - 1) as u32;
    }
    let n = keys.len();

    // Neighbour lists (compressed rows, neighbours in key order, self included).
    let reach = eps_px.floor().min(f64::from(u16::MAX)) as i32;
    let eps2 = eps_px * eps_px;
    let dy_max: Vec<i32> = (0..=reach).map(|dx| (eps2 - f64::from(dx * dx)).max(0.0).sqrt().floor() as i32).collect();
    // column_start[x - x_min] is the first pixel index in column x.
    let x_min = (keys[0] >> 16) as i32;
    let x_max = (keys[n - 1] >> 16) as i32;
    let mut column_start = vec![0u32; (x_max - x_min + 2) as usize];
    let mut cursor = 0usize;
    for (c, start) in column_start.iter_mut().enumerate() {
        let x = (x_min + c as i32) as u32;
        while cursor < n && keys[cursor] >> 16 < x {
            cursor += 1;
        }
        *start = cursor as u32;
    }
    let mut offsets = Vec::with_capacity(n + 1);
    let mut nbrs: Vec<u32> = Vec::with_capacity(n * 8);
    offsets.push(0u32);
    for &k in &keys {
        let (x, y) = ((k >> 16) as i32, (k & 0xffff) as i32);
        for nx in (x - reach).max(x_min)..=(x + reach).min(x_max) {
            let dy = dy_max[(nx - x).unsigned_abs() as usize];
            let c = (nx - x_min) as usize;
            let (a, b) = (column_start[c] as usize, column_start[c + 1] as usize);
            for (j, &q) in keys[a..b].iter().enumerate() {
                let qy = (q & 0xffff) as i32;
                if qy > y + dy {
                    break;
                }
                if qy >= y - dy {
                    nbrs.push((a + j) as u32);
                }
            }
        }
        offsets.push(nbrs.len() as u32);
    }
    let neighbours = |p: usize| &nbrs[offsets[p] as usize..offsets[p + 1] as usize];

    let core: Vec<bool> = (0..n)
        .map(|p| neighbours(p).iter().map(|&q| counts[q as usize] as usize).sum::<usize>() >= min_pts)
        .collect();

    // Connected components over core pixels.
    let mut label = vec![NOISE; n];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for p in 0..n {
        if !core[p] || label[p] != NOISE {
            continue;
        }
        label[p] = next;
        queue.push_back(p);
        while let Some(q) = queue.pop_front() {
            for &r in neighbours(q) {
                let r = r as usize;
                if core[r] && label[r] == NOISE {
                    label[r] = next;
                    queue.push_back(r);
                }
            }
        }
        next += 1;
    }
    if next == 0 {
        return None;
    }

    // Border pixels join their nearest core neighbour's cluster.
    for p in 0..n {
        if core[p] {
            continue;
        }
        let (x, y) = ((keys[p] >> 16) as i64, (keys[p] & 0xffff) as i64);
        let mut best: Option<(i64, u32)> = None;
        for &q in neighbours(p) {
            let q = q as usize;
            if !core[q] {
                continue;
            }
            let (qx, qy) = ((keys[q] >> 16) as i64, (keys[q] & 0xffff) as i64);
            let d2 = (qx - x).pow(2) + (qy - y).pow(2);
            if best.is_none_or(|(bd, _)| d2 < bd) {
                best = Some((d2, label[q]));
            }
        }
        if let Some((_, l)) = best {
            label[p] = l;
        }
    }

    let labels = pixel_of.iter().map(|&p| label[p as usize]).collect();
    Some((labels, next as usize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Polarity;

    fn frame(events: &[Event]) -> EventFrame<'_> {
        EventFrame { index: 0, window_start: 0, window_end: 1000, events }
    }

    fn at(x: u16, y: u16) -> Event {
        Event::new(0, x, y, Polarity::Positive)
    }

    #[test]
    fn single_pixel_burst_is_one_cluster() {
        let events = vec![at(10, 10); 10];
        let c = dbscan(&frame(&events), 3.0, 5);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].len(), 10);
        assert_eq!(c[0].centroid, (10.0, 10.0));
    }

    #[test]
    fn distant_groups_are_separate() {
        let mut events = vec![at(10, 10); 10];
        events.extend(vec![at(110, 10); 10]);
        let c = dbscan(&frame(&events), 3.0, 5);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].centroid, (10.0, 10.0));
    }

    #[test]
    fn sparse_points_are_noise() {
        let events = vec![at(0, 0), at(50, 50), at(100, 100)];
        assert!(dbscan(&frame(&events), 3.0, 5).is_empty());
    }

    #[test]
    fn empty_frame_gives_nothing() {
        assert!(dbscan(&frame(&[]), 3.0, 5).is_empty());
    }

    #[test]
    fn border_point_is_kept() {
        // (13, 10) sees only the three events at (10, 10), exactly eps away.
        let mut events = vec![at(10, 10); 3];
        events.extend(vec![at(8, 10); 2]);
        events.push(at(13, 10));
        let c = dbscan(&frame(&events), 3.0, 5);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].len(), 6);
        assert_eq!(c[0].bbox, (8, 10, 13, 10));
        assert!(dbscan(&frame(&events), 2.9, 5).iter().all(|c| c.len() == 5));
    }

    #[test]
    fn order_is_by_centroid_row() {
        let mut events = vec![at(5, 100); 6];
        events.extend(vec![at(200, 20); 6]);
        events.extend(vec![at(100, 20); 6]);
        let c = dbscan(&frame(&events), 3.0, 5);
        let centroids: Vec<_> = c.iter().map(|c| c.centroid).collect();
        assert_eq!(centroids, vec![(100.0, 20.0), (200.0, 20.0), (5.0, 100.0)]);
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(centroid(&[at(0, 0), at(2, 0)]), Ok((1.0, 0.0)));
        assert_eq!(centroid(&[at(5, 7)]), Ok((5.0, 7.0)));
        assert_eq!(centroid(&[]), Err(ClusterError::EmptyCluster));
    }
}
