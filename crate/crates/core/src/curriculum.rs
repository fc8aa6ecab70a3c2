//! Difficulty-ordered admission of detector outputs as new point labels.
//!
//! Each round, candidates (connected components of the thresholded detector
//! output) are scored by how far they sit from existing labels, how large
//! they are and how unsure the detector was. The easiest non-overlapping
//! candidates are admitted, with the admitted count shrinking as the label
//! set grows.

use crate::error::{Error, Result};
use crate::heatmap::Peaks;
use crate::raster::{Point, PointSet};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    /// Rounded centroid; this is the point admitted as a label.
    pub point: Point,
    /// Exact component centroid `(row, col)`.
    pub centroid: (f64, f64),
    pub area: f64,
    pub mean_score: f64,
    /// Mean distance from the centroid to the k nearest existing labels.
    pub mean_knn_dist: f64,
}

/// Min-max scaling to [0, 1]; a constant sequence maps to all zeros.
pub fn normalize_unit(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let range = max - min;
    if range <= 0.0 || !range.is_finite() {
        return Ok(vec![0.0; values.len()]);
    }
    Ok(values.iter().map(|&v| (v - min) / range).collect())
}

/// Mean distance from `from` to its `k` nearest points in `existing`
/// (all of them when fewer than `k`). Zero when `existing` is empty.
pub fn mean_knn_distance(from: (f64, f64), existing: &PointSet, k: usize) -> f64 {
    if existing.is_empty() || k == 0 {
        return 0.0;
    }
    let mut d: Vec<f64> = existing
        .iter()
        .map(|p| (p.row as f64 - from.0).hypot(p.col as f64 - from.1))
        .collect();
    let k = k.min(d.len());
    d.select_nth_unstable_by(k - 1, f64::total_cmp);
    d[..k].iter().sum::<f64>() / k as f64
}

/// Turns decoded peaks into scored candidates.
pub fn candidates_from_peaks(peaks: &Peaks, existing: &PointSet, k_neighbors: usize) -> Vec<Candidate> {
    // Peaks may have dropped components whose centroids collided, so pair by
    // rounded position rather than by index.
    peaks
        .stats
        .values()
        .filter_map(|s| {
            let point = Point::new(
                crate::heatmap::round_half_up(s.centroid.0),
                crate::heatmap::round_half_up(s.centroid.1),
            );
            peaks.points.points().contains(&point).then(|| Candidate {
                point,
                centroid: s.centroid,
                area: s.area as f64,
                mean_score: s.mean_score,
                mean_knn_dist: mean_knn_distance(s.centroid, existing, k_neighbors),
            })
        })
        .collect()
}

/// Training difficulty `N(dist) * N(area) * (1 - N(score))` per candidate,
/// normalised over the given candidate set.
pub fn training_difficulty(cands: &[Candidate]) -> Vec<f64> {
    if cands.is_empty() {
        return Vec::new();
    }
    let field = |f: fn(&Candidate) -> f64| -> Vec<f64> {
        normalize_unit(&cands.iter().map(f).collect::<Vec<_>>()).expect("non-empty")
    };
    let dist = field(|c| c.mean_knn_dist);
    let area = field(|c| c.area);
    let score = field(|c| c.mean_score);
    (0..cands.len()).map(|i| dist[i] * area[i] * (1.0 - score[i])).collect()
}

/// Number of pseudo labels to admit: `floor(n_det * exp(-n_gt / n_det))`.
pub fn admission_count(n_det: usize, n_gt: usize) -> usize {
    if n_det == 0 {
        return 0;
    }
    let n = n_det as f64;
    (n * (-(n_gt as f64) / n).exp()).floor() as usize
}

fn overlaps(c: &Candidate, existing: &PointSet, radius: f64) -> bool {
    let r2 = radius * radius;
    existing.iter().any(|p| c.point.dist2(*p) as f64 <= r2)
}

/// Admits the easiest candidates that do not overlap an existing label.
///
/// A candidate overlaps when its rounded centroid is within
/// `existing_radius` (inclusive) of an existing point. Difficulty is computed
/// over the non-overlapping candidates; ties are broken by row-major
/// centroid position.
pub fn select_pseudo_labels(
    cands: &[Candidate],
    existing: &PointSet,
    existing_radius: f64,
    n_det: usize,
    n_gt: usize,
) -> PointSet {
    let free: Vec<Candidate> = cands
        .iter()
        .filter(|c| !overlaps(c, existing, existing_radius))
        .copied()
        .collect();
    let td = training_difficulty(&free);
    let mut order: Vec<usize> = (0..free.len()).collect();
    order.sort_by(|&a, &b| {
        td[a]
            .total_cmp(&td[b])
            .then_with(|| free[a].point.cmp(&free[b].point))
            .then_with(|| {
                free[a]
                    .centroid
                    .0
                    .total_cmp(&free[b].centroid.0)
                    .then(free[a].centroid.1.total_cmp(&free[b].centroid.1))
            })
    });
    let take = admission_count(n_det, n_gt);
    let mut out: Vec<Point> = Vec::with_capacity(take.min(order.len()));
    for i in order {
        if out.len() == take {
            break;
        }
        let p = free[i].point;
        if !out.contains(&p) {
            out.push(p);
        }
    }
    PointSet::new(out).expect("duplicates skipped")
}

/// One curriculum round over a decoded detector output.
///
/// `n_det` is the number of valid (non-overlapping) candidates and `n_gt`
/// the size of the current label set.
pub fn curriculum_round(peaks: &Peaks, existing: &PointSet, k_neighbors: usize, existing_radius: f64) -> PointSet {
    let cands = candidates_from_peaks(peaks, existing, k_neighbors);
    let n_det = cands.iter().filter(|c| !overlaps(c, existing, existing_radius)).count();
    select_pseudo_labels(&cands, existing, existing_radius, n_det, existing.len())
}
