//! Detection targets from point annotations, the weighted regression loss,
//! and decoding predicted heatmaps back into points.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::raster::{
    component_stats, connected_components, distance_to_nearest_point, ComponentStats, Connectivity, InstanceMap, Point,
    PointSet, RasterF32,
};
use crate::LossGrad;

/// Target value of ignored pixels.
pub const IGNORE: f32 = -1.0;

/// Target value at distance `d` from the closest annotation.
///
/// `exp(-d^2 / 2 sigma^2)` inside `r1`, 0 on `[r1, r2]`, [`IGNORE`] beyond `r2`.
pub fn target_value(d: f64, sigma: f64, r1: f64, r2: f64) -> f32 {
    if d < r1 {
        (-(d * d) / (2.0 * sigma * sigma)).exp() as f32
    } else if d <= r2 {
        0.0
    } else {
        IGNORE
    }
}

/// Gaussian detection target for a set of annotated points.
pub fn gaussian_heatmap(
    points: &PointSet,
    height: usize,
    width: usize,
    sigma: f64,
    r1: f64,
    r2: f64,
) -> Result<RasterF32> {
    if !(r1 > 0.0 && r1 < r2) {
        return Err(Error::Config(format!("need 0 < r1 < r2, got r1={r1} r2={r2}")));
    }
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    let dist = distance_to_nearest_point(points, height, width)?;
    Ok(dist.map(|&d| target_value(d as f64, sigma, r1, r2)))
}

/// Weighted MSE over non-ignored pixels, normalised by their count.
///
/// Pixels with a positive target get `w_fg`, zero-target pixels `w_bg`.
pub fn detection_loss(pred: &RasterF32, target: &RasterF32, w_fg: f64, w_bg: f64) -> Result<LossGrad> {
    pred.ensure_same_shape(target)?;
    let n = target.iter().filter(|&&t| t != IGNORE).count();
    if n == 0 {
        return Err(Error::NoSupervisedPixels);
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0f64;
    let mut grad = RasterF32::filled(pred.height(), pred.width(), 0.0);
    for i in 0..pred.len() {
        let t = target[i];
        if t == IGNORE {
            continue;
        }
        let w = if t > 0.0 { w_fg } else { w_bg };
        let diff = pred[i] as f64 - t as f64;
        loss += w * diff * diff;
        grad[i] = (2.0 * w * diff * inv_n) as f32;
    }
    Ok(LossGrad {
        loss: loss * inv_n,
        grad,
    })
}

/// Points decoded from a predicted heatmap.
#[derive(Clone, Debug)]
pub struct Peaks {
    /// One point per component at its rounded centroid, scored by the
    /// component's mean prediction.
    pub points: PointSet,
    pub components: InstanceMap,
    /// Keyed by component id; `points[i]` comes from id `i + 1`.
    pub stats: BTreeMap<u32, ComponentStats>,
}

/// Half-up rounding of a centroid coordinate.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Thresholds `pred` (clamped to [0, 1]) and returns the component centroids.
pub fn extract_peaks(pred: &RasterF32, peak_threshold: f32, connectivity: Connectivity) -> Peaks {
    let clamped = pred.map(|&v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
    let components = connected_components(&clamped.binarize(peak_threshold), connectivity);
    let stats = component_stats(&components, &clamped).expect("shapes agree by construction");
    let (h, w) = pred.shape();
    let mut pts = Vec::with_capacity(stats.len());
    let mut scores = Vec::with_capacity(stats.len());
    for s in stats.values() {
        pts.push(Point::new(
            round_half_up(s.centroid.0).min(h - 1),
            round_half_up(s.centroid.1).min(w - 1),
        ));
        scores.push(s.mean_score as f32);
    }
    // Centroids of distinct components can round to the same pixel only for
    // interleaved shapes; keep the first.
    let mut seen = std::collections::HashSet::new();
    let (pts, scores): (Vec<_>, Vec<_>) = pts.into_iter().zip(scores).filter(|(p, _)| seen.insert(*p)).unzip();
    Peaks {
        points: PointSet::with_scores(pts, scores).expect("deduplicated above"),
        components,
        stats,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Raster;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn target_branches() {
        assert_eq!(target_value(0.0, 3.0, 4.0, 8.0), 1.0);
        assert_abs_diff_eq!(target_value(2.0, 2.0, 4.0, 8.0), 0.606_530_66, epsilon = 1e-6);
        assert_eq!(target_value(6.0, 2.0, 4.0, 8.0), 0.0);
        assert_eq!(target_value(10.0, 2.0, 4.0, 8.0), IGNORE);
    }

    #[test]
    fn heatmap_on_grid() {
        let pts = PointSet::new(vec![Point::new(0, 0)]).unwrap();
        let h = gaussian_heatmap(&pts, 1, 12, 2.0, 4.0, 8.0).unwrap();
        assert_eq!(h.get(0, 0), 1.0);
        assert_abs_diff_eq!(h.get(0, 2), (-0.5f64).exp() as f32);
        assert_eq!(h.get(0, 6), 0.0);
        assert_eq!(h.get(0, 10), IGNORE);
    }

    #[test]
    fn heatmap_rejects_bad_radii() {
        let pts = PointSet::new(vec![Point::new(0, 0)]).unwrap();
        assert!(matches!(
            gaussian_heatmap(&pts, 4, 4, 2.0, 8.0, 8.0),
            Err(Error::Config(_))
        ));
        assert_eq!(
            gaussian_heatmap(&PointSet::empty(), 4, 4, 2.0, 4.0, 8.0),
            Err(Error::NoAnnotations)
        );
    }

    #[test]
    fn loss_zero_at_target() {
        let t = Raster::from_vec(1, 3, vec![1.0, 0.0, IGNORE]).unwrap();
        let p = Raster::from_vec(1, 3, vec![1.0, 0.0, 0.3]).unwrap();
        let out = detection_loss(&p, &t, 1.0, 0.1).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn two_pixel_weighting() {
        let t = Raster::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let p = Raster::from_vec(1, 2, vec![0.0, 1.0]).unwrap();
        let out = detection_loss(&p, &t, 1.0, 0.1).unwrap();
        assert_abs_diff_eq!(out.loss, 0.55, epsilon = 1e-12);
        assert_abs_diff_eq!(out.grad[0], -1.0);
        assert_abs_diff_eq!(out.grad[1], 0.1);
    }

    #[test]
    fn ignored_pixels_do_not_contribute() {
        let t = Raster::from_vec(1, 3, vec![1.0, 0.0, IGNORE]).unwrap();
        let a = Raster::from_vec(1, 3, vec![0.2, 0.4, 0.0]).unwrap();
        let b = Raster::from_vec(1, 3, vec![0.2, 0.4, 0.9]).unwrap();
        let la = detection_loss(&a, &t, 1.0, 0.1).unwrap();
        let lb = detection_loss(&b, &t, 1.0, 0.1).unwrap();
        assert_eq!(la.loss, lb.loss);
        assert_eq!(lb.grad[2], 0.0);
    }

    #[test]
    fn all_ignored_is_an_error() {
        let t = Raster::filled(2, 2, IGNORE);
        let p = Raster::filled(2, 2, 0.0);
        assert_eq!(detection_loss(&p, &t, 1.0, 0.1), Err(Error::NoSupervisedPixels));
    }

    #[test]
    fn peaks_examples() {
        let zero = Raster::filled(10, 10, 0.0f32);
        assert!(extract_peaks(&zero, 0.65, Connectivity::Eight).points.is_empty());

        let mut plateau = Raster::filled(11, 11, 0.0f32);
        for r in 4..=6 {
            for c in 4..=6 {
                plateau.set(r, c, 0.9);
            }
        }
        let peaks = extract_peaks(&plateau, 0.65, Connectivity::Eight);
        assert_eq!(peaks.points.points(), &[Point::new(5, 5)]);
        assert_abs_diff_eq!(peaks.points.scores().unwrap()[0], 0.9, epsilon = 1e-6);

        let low = plateau.map(|&v| if v > 0.0 { 0.5 } else { 0.0 });
        assert!(extract_peaks(&low, 0.65, Connectivity::Eight).points.is_empty());
    }

    #[test]
    fn centroid_rounds_half_up() {
        // 1x2 component at cols 2,3 -> centroid col 2.5 -> 3.
        let mut m = Raster::filled(3, 6, 0.0f32);
        m.set(1, 2, 1.0);
        m.set(1, 3, 1.0);
        let peaks = extract_peaks(&m, 0.65, Connectivity::Eight);
        assert_eq!(peaks.points.points(), &[Point::new(1, 3)]);
    }

    proptest! {
        #[test]
        fn target_non_increasing_inside_r1(a in 0.0f64..8.0, b in 0.0f64..8.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(target_value(lo, 4.0, 8.0, 15.0) >= target_value(hi, 4.0, 8.0, 15.0));
        }
    }
}
