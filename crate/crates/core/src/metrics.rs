//! Detection and instance-segmentation scores.
//!
//! Empty-versus-empty comparisons score 1 for every metric.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::Result;
use crate::raster::{BinaryMask, InstanceMap, PointSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DetectionScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// One-to-one matching of predicted to ground-truth points: pairs within
/// `match_radius` (inclusive) are taken closest first, ties by prediction
/// then ground-truth index.
pub fn detection_prf(pred: &PointSet, gt: &PointSet, match_radius: f64) -> DetectionScores {
    let r2 = match_radius * match_radius;
    let mut cands: Vec<(u64, usize, usize)> = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let d2 = p.dist2(*g);
            if d2 as f64 <= r2 {
                cands.push((d2, i, j));
            }
        }
    }
    cands.sort_unstable();
    let mut used_p = vec![false; pred.len()];
    let mut used_g = vec![false; gt.len()];
    let mut tp = 0;
    for (_, i, j) in cands {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            tp += 1;
        }
    }
    let ratio = |n: usize| if n > 0 { tp as f64 / n as f64 } else { 0.0 };
    let (precision, recall) = (ratio(pred.len()), ratio(gt.len()));
    DetectionScores {
        precision,
        recall,
        f1: harmonic(precision, recall),
        true_positives: tp,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PixelScores {
    pub accuracy: f64,
    pub f1: f64,
}

/// Pixel accuracy and foreground F1 (`2TP / (2TP + FP + FN)`).
pub fn pixel_accuracy_f1(pred: &BinaryMask, gt: &BinaryMask) -> Result<PixelScores> {
    pred.ensure_same_shape(gt)?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt.iter()) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let denom = 2 * tp + fp + fn_;
    Ok(PixelScores {
        accuracy: (tp + tn) as f64 / pred.len() as f64,
        f1: if denom == 0 {
            1.0
        } else {
            2.0 * tp as f64 / denom as f64
        },
    })
}

/// Pixel overlap table between two instance maps.
struct Overlap {
    gt_area: BTreeMap<u32, usize>,
    pred_area: BTreeMap<u32, usize>,
    /// gt id -> (pred id -> intersection)
    by_gt: BTreeMap<u32, BTreeMap<u32, usize>>,
    /// pred id -> (gt id -> intersection)
    by_pred: BTreeMap<u32, BTreeMap<u32, usize>>,
}

impl Overlap {
    fn new(pred: &InstanceMap, gt: &InstanceMap) -> Result<Self> {
        pred.ensure_same_shape(gt)?;
        let mut by_gt: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
        let mut by_pred: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
        for (&p, &g) in pred.iter().zip(gt.iter()) {
            if p != 0 && g != 0 {
                *by_gt.entry(g).or_default().entry(p).or_insert(0) += 1;
                *by_pred.entry(p).or_default().entry(g).or_insert(0) += 1;
            }
        }
        Ok(Self {
            gt_area: gt.areas(),
            pred_area: pred.areas(),
            by_gt,
            by_pred,
        })
    }

    fn union(&self, g: u32, p: u32, inter: usize) -> usize {
        self.gt_area[&g] + self.pred_area[&p] - inter
    }
}

/// Aggregated Jaccard index.
///
/// Each ground-truth instance is paired with the prediction of highest IoU
/// (ties to the lower id); intersections and unions of those pairs are
/// summed, ground-truth instances without any overlap add their area to the
/// union, and predictions never chosen add theirs.
pub fn aji(pred: &InstanceMap, gt: &InstanceMap) -> Result<f64> {
    let ov = Overlap::new(pred, gt)?;
    if ov.gt_area.is_empty() && ov.pred_area.is_empty() {
        return Ok(1.0);
    }
    let mut inter_sum = 0usize;
    let mut union_sum = 0usize;
    let mut used = std::collections::BTreeSet::new();
    for (&g, &g_area) in &ov.gt_area {
        let best = ov.by_gt.get(&g).and_then(|row| {
            row.iter()
                .map(|(&p, &i)| (p, i, i as f64 / ov.union(g, p, i) as f64))
                .fold(None, |best: Option<(u32, usize, f64)>, cur| match best {
                    Some(b) if b.2 >= cur.2 => Some(b),
                    _ => Some(cur),
                })
        });
        match best {
            Some((p, i, _)) => {
                inter_sum += i;
                union_sum += ov.union(g, p, i);
                used.insert(p);
            }
            None => union_sum += g_area,
        }
    }
    for (p, &area) in &ov.pred_area {
        if !used.contains(p) {
            union_sum += area;
        }
    }
    Ok(inter_sum as f64 / union_sum as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PanopticScores {
    pub dq: f64,
    pub sq: f64,
    pub pq: f64,
    /// `(gt id, pred id, iou)` for every match.
    #[serde(skip)]
    pub matches: Vec<(u32, u32, f64)>,
}

/// Detection, segmentation and panoptic quality under IoU > 0.5 matching.
pub fn panoptic_quality(pred: &InstanceMap, gt: &InstanceMap) -> Result<PanopticScores> {
    let ov = Overlap::new(pred, gt)?;
    if ov.gt_area.is_empty() && ov.pred_area.is_empty() {
        return Ok(PanopticScores {
            dq: 1.0,
            sq: 1.0,
            pq: 1.0,
            matches: Vec::new(),
        });
    }
    let mut matches = Vec::new();
    for (&g, row) in &ov.by_gt {
        for (&p, &i) in row {
            let iou = i as f64 / ov.union(g, p, i) as f64;
            if iou > 0.5 {
                matches.push((g, p, iou));
            }
        }
    }
    let tp = matches.len() as f64;
    let fp = ov.pred_area.len() as f64 - tp;
    let fn_ = ov.gt_area.len() as f64 - tp;
    let dq = tp / (tp + 0.5 * fp + 0.5 * fn_);
    let sq = if matches.is_empty() {
        0.0
    } else {
        matches.iter().map(|m| m.2).sum::<f64>() / tp
    };
    Ok(PanopticScores {
        dq,
        sq,
        pq: dq * sq,
        matches,
    })
}

/// Symmetric object-level Dice.
///
/// Each ground-truth object is scored by its Dice with the prediction of
/// largest overlap and weighted by its share of ground-truth area; the same
/// is done from the prediction side, and the two sums are averaged.
pub fn object_dice(pred: &InstanceMap, gt: &InstanceMap) -> Result<f64> {
    let ov = Overlap::new(pred, gt)?;
    match (ov.gt_area.is_empty(), ov.pred_area.is_empty()) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let side =
        |areas: &BTreeMap<u32, usize>, other: &BTreeMap<u32, usize>, table: &BTreeMap<u32, BTreeMap<u32, usize>>| {
            let total: usize = areas.values().sum();
            areas
                .iter()
                .map(|(id, &area)| {
                    // Largest overlap; among equal overlaps the best Dice, then
                    // the lower id, so the score does not depend on labelling.
                    let dice = table.get(id).map_or(0.0, |row| {
                        row.iter()
                            .map(|(o, &i)| (i, 2.0 * i as f64 / (area + other[o]) as f64))
                            .fold((0usize, 0.0f64), |b, cur| {
                                if cur.0 > b.0 || (cur.0 == b.0 && cur.1 > b.1) {
                                    cur
                                } else {
                                    b
                                }
                            })
                            .1
                    });
                    dice * area as f64 / total as f64
                })
                .sum::<f64>()
        };
    let g = side(&ov.gt_area, &ov.pred_area, &ov.by_gt);
    let p = side(&ov.pred_area, &ov.gt_area, &ov.by_pred);
    Ok(0.5 * (g + p))
}

/// All segmentation scores for one image pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SegmentationScores {
    pub accuracy: f64,
    pub f1: f64,
    pub dice: f64,
    pub aji: f64,
    pub dq: f64,
    pub sq: f64,
    pub pq: f64,
}

pub fn evaluate_segmentation(pred: &InstanceMap, gt: &InstanceMap) -> Result<SegmentationScores> {
    let px = pixel_accuracy_f1(&pred.foreground(), &gt.foreground())?;
    let pq = panoptic_quality(pred, gt)?;
    Ok(SegmentationScores {
        accuracy: px.accuracy,
        f1: px.f1,
        dice: object_dice(pred, gt)?,
        aji: aji(pred, gt)?,
        dq: pq.dq,
        sq: pq.sq,
        pq: pq.pq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Point, Raster};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn inst(h: usize, w: usize, cells: &[(usize, usize, u32)]) -> InstanceMap {
        let mut m = Raster::filled(h, w, 0u32);
        for &(r, c, id) in cells {
            m.set(r, c, id);
        }
        m
    }

    fn pts(v: &[(usize, usize)]) -> PointSet {
        PointSet::new(v.iter().map(|&p| Point::from(p)).collect()).unwrap()
    }

    #[test]
    fn detection_examples() {
        let gt = pts(&[(5, 5), (20, 20)]);
        let s = detection_prf(&gt, &gt, 6.0);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));

        let s = detection_prf(&PointSet::empty(), &gt, 6.0);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));

        let two = pts(&[(5, 6), (5, 3)]);
        let one = pts(&[(5, 5)]);
        let s = detection_prf(&two, &one, 6.0);
        assert_eq!(s.true_positives, 1);
        assert_eq!(s.precision, 0.5);
        assert_eq!(s.recall, 1.0);
    }

    #[test]
    fn greedy_matching_is_closest_first() {
        // pred0 is 1 px from gt0 and 2 px from gt1; pred1 is 3 px from gt0.
        let pred = pts(&[(0, 1), (0, 8)]);
        let gt = pts(&[(0, 0), (0, 3)]);
        let s = detection_prf(&pred, &gt, 5.0);
        assert_eq!(s.true_positives, 2);
    }

    #[test]
    fn pixel_examples() {
        let a = Raster::from_vec(1, 4, vec![true, false, true, false]).unwrap();
        let s = pixel_accuracy_f1(&a, &a).unwrap();
        assert_eq!((s.accuracy, s.f1), (1.0, 1.0));
        let not_a = a.map(|&b| !b);
        assert_eq!(pixel_accuracy_f1(&not_a, &a).unwrap().accuracy, 0.0);
        let p = Raster::from_vec(1, 5, vec![true, true, true, false, false]).unwrap();
        let g = Raster::from_vec(1, 5, vec![true, true, false, true, false]).unwrap();
        assert_abs_diff_eq!(pixel_accuracy_f1(&p, &g).unwrap().f1, 4.0 / 6.0, epsilon = 1e-12);
        let empty = Raster::filled(2, 2, false);
        assert_eq!(pixel_accuracy_f1(&empty, &empty).unwrap().f1, 1.0);
    }

    #[test]
    fn aji_examples() {
        let gt = inst(4, 4, &[(0, 0, 1), (0, 1, 1)]);
        let pred = inst(4, 4, &[(0, 0, 1)]);
        assert_abs_diff_eq!(aji(&pred, &gt).unwrap(), 0.5);
        assert_eq!(aji(&gt, &gt).unwrap(), 1.0);

        let gt = inst(4, 4, &[(0, 0, 1), (0, 1, 1), (1, 0, 1), (1, 1, 1)]);
        let pred = inst(
            4,
            4,
            &[
                (0, 0, 1),
                (0, 1, 1),
                (1, 0, 1),
                (1, 1, 1),
                (3, 0, 2),
                (3, 1, 2),
                (3, 2, 2),
                (3, 3, 2),
            ],
        );
        assert_abs_diff_eq!(aji(&pred, &gt).unwrap(), 0.5);
        let empty = Raster::filled(4, 4, 0u32);
        assert_eq!(aji(&empty, &empty).unwrap(), 1.0);
    }

    #[test]
    fn panoptic_examples() {
        let gt = inst(4, 4, &[(0, 0, 1), (0, 1, 1)]);
        let s = panoptic_quality(&gt, &gt).unwrap();
        assert_eq!((s.dq, s.sq, s.pq), (1.0, 1.0, 1.0));

        let pred = inst(4, 4, &[(0, 0, 1)]);
        let s = panoptic_quality(&pred, &gt).unwrap();
        assert_eq!(s.dq, 0.0);
        assert!(s.matches.is_empty());

        // IoU 4/5 = 0.8, and a second gt object with no prediction.
        let gt = inst(
            6,
            6,
            &[(0, 0, 1), (0, 1, 1), (0, 2, 1), (0, 3, 1), (0, 4, 1), (4, 4, 2)],
        );
        let pred = inst(6, 6, &[(0, 0, 7), (0, 1, 7), (0, 2, 7), (0, 3, 7)]);
        let s = panoptic_quality(&pred, &gt).unwrap();
        assert_abs_diff_eq!(s.dq, 1.0 / 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.sq, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(s.pq, 0.8 / 1.5, epsilon = 1e-12);
    }

    #[test]
    fn object_dice_examples() {
        let gt = inst(4, 4, &[(0, 0, 1), (0, 1, 1), (1, 0, 1), (1, 1, 1)]);
        assert_eq!(object_dice(&gt, &gt).unwrap(), 1.0);
        let empty = Raster::filled(4, 4, 0u32);
        assert_eq!(object_dice(&empty, &gt).unwrap(), 0.0);
        assert_eq!(object_dice(&empty, &empty).unwrap(), 1.0);
        let pred = inst(4, 4, &[(0, 0, 3), (0, 1, 3)]);
        assert_abs_diff_eq!(object_dice(&pred, &gt).unwrap(), 4.0 / 6.0, epsilon = 1e-12);
    }

    fn arb_pair() -> impl Strategy<Value = (InstanceMap, InstanceMap)> {
        (2usize..10, 2usize..10).prop_flat_map(|(h, w)| {
            let v = || proptest::collection::vec(0u32..5, h * w);
            (v(), v()).prop_map(move |(a, b)| (Raster::from_vec(h, w, a).unwrap(), Raster::from_vec(h, w, b).unwrap()))
        })
    }

    /// Reverses id order.
    fn relabel(m: &InstanceMap) -> InstanceMap {
        m.map(|&id| if id == 0 { 0 } else { 100 - id })
    }

    /// Keeps id order; the AJI tie rule picks the lower id, so exact IoU
    /// ties are only order-invariant.
    fn relabel_monotone(m: &InstanceMap) -> InstanceMap {
        m.map(|&id| if id == 0 { 0 } else { 3 * id + 7 })
    }

    proptest! {
        #[test]
        fn metrics_bounded_and_relabel_invariant((pred, gt) in arb_pair()) {
            let base = evaluate_segmentation(&pred, &gt).unwrap();
            for v in [base.accuracy, base.f1, base.dice, base.aji, base.dq, base.sq, base.pq] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let moved = evaluate_segmentation(&relabel(&pred), &relabel(&gt)).unwrap();
            let shifted = evaluate_segmentation(&relabel_monotone(&pred), &relabel_monotone(&gt)).unwrap();
            prop_assert!((base.aji - shifted.aji).abs() < 1e-12);
            prop_assert!((base.pq - moved.pq).abs() < 1e-12);
            prop_assert!((base.dice - moved.dice).abs() < 1e-12);

            let same = evaluate_segmentation(&gt, &gt).unwrap();
            for v in [same.aji, same.pq, same.dice, same.f1] {
                prop_assert!((v - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn pq_matches_are_unique((pred, gt) in arb_pair()) {
            let s = panoptic_quality(&pred, &gt).unwrap();
            let mut g: Vec<u32> = s.matches.iter().map(|m| m.0).collect();
            let mut p: Vec<u32> = s.matches.iter().map(|m| m.1).collect();
            let n = g.len();
            g.sort(); g.dedup();
            p.sort(); p.dedup();
            prop_assert_eq!(g.len(), n);
            prop_assert_eq!(p.len(), n);
        }

        #[test]
        fn aji_below_pooled_iou_of_its_pairs((pred, gt) in arb_pair()) {
            // Penalty terms only add to the denominator.
            let ov = Overlap::new(&pred, &gt).unwrap();
            let value = aji(&pred, &gt).unwrap();
            let (mut i_sum, mut u_sum) = (0usize, 0usize);
            for (&g, row) in &ov.by_gt {
                let (p, i) = row.iter()
                    .map(|(&p, &i)| (p, i))
                    .fold(None, |b: Option<(u32, usize)>, (p, i)| match b {
                        Some(b) if b.1 as f64 / ov.union(g, b.0, b.1) as f64 >= i as f64 / ov.union(g, p, i) as f64 => Some(b),
                        _ => Some((p, i)),
                    }).unwrap();
                i_sum += i;
                u_sum += ov.union(g, p, i);
            }
            if u_sum > 0 {
                prop_assert!(value <= i_sum as f64 / u_sum as f64 + 1e-12);
            }
        }
    }
}
