//! Coarse tri-state supervision synthesised from a full point set, and the
//! masked cross-entropy that fits a foreground-probability map to it.

mod kmeans;

pub use kmeans::{kmeans, KMeansResult};

use crate::error::{Error, Result};
use crate::nearest::NearestPoints;
use crate::raster::{Point, PointSet, Raster, RasterF32, Tri, TriMask};
use crate::LossGrad;

pub type RgbImage = Raster<[u8; 3]>;

/// Nearest-point cell index per pixel, ties to the lower point index.
pub fn voronoi_cells(points: &PointSet, height: usize, width: usize) -> Result<Raster<u32>> {
    if points.is_empty() {
        return Err(Error::NoAnnotations);
    }
    if height == 0 || width == 0 {
        return Err(Error::InvalidRaster("dimensions must be positive".into()));
    }
    points.check_bounds(height, width)?;
    let index = NearestPoints::new(points.points(), height, width);
    Ok(Raster::from_fn(height, width, |r, c| {
        index.nearest(Point::new(r, c)).0 as u32
    }))
}

/// Voronoi tri-state label.
///
/// Pixels with a 4-neighbour in another cell are Background (a ridge two
/// pixels wide), pixels within `fg_radius` of their own cell's point are
/// `Foreground(point_index + 1)`, everything else is Ignore. Foreground wins
/// over Background.
pub fn voronoi_labels(points: &PointSet, height: usize, width: usize, fg_radius: f64) -> Result<TriMask> {
    let cells = voronoi_cells(points, height, width)?;
    let pts = points.points();
    let r2 = fg_radius * fg_radius;
    Ok(Raster::from_fn(height, width, |r, c| {
        let cell = cells.get(r, c);
        let here = Point::new(r, c);
        if here.dist2(pts[cell as usize]) as f64 <= r2 {
            return Tri::Foreground(cell + 1);
        }
        let ridge = [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)].iter().any(|&(dr, dc)| {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            cells.contains(nr, nc) && cells.get(nr as usize, nc as usize) != cell
        });
        if ridge {
            Tri::Background
        } else {
            Tri::Ignore
        }
    }))
}

/// Per-pixel features `(min(D, clip) / clip, R/255, G/255, B/255)`.
pub fn cluster_features(image: &RgbImage, points: &PointSet, dist_clip: f64) -> Result<Vec<f64>> {
    let dist = crate::raster::distance_to_nearest_point(points, image.height(), image.width())?;
    let mut feats = Vec::with_capacity(image.len() * 4);
    for (d, rgb) in dist.iter().zip(image.iter()) {
        feats.push((*d as f64).min(dist_clip) / dist_clip);
        feats.extend(rgb.iter().map(|&v| v as f64 / 255.0));
    }
    Ok(feats)
}

/// k-means (k = 3) cluster tri-state label.
///
/// The cluster holding most annotated pixels becomes Foreground (instance id
/// = nearest point index + 1), the cluster with the largest mean distance
/// feature becomes Background and the remaining cluster is Ignore.
///
/// Fails with [`Error::DegenerateClustering`] when the foreground and
/// background rules pick the same cluster, or when the cluster colours
/// coincide so that the split carries no image information.
pub fn cluster_labels(
    image: &RgbImage,
    points: &PointSet,
    dist_clip: f64,
    max_iters: usize,
    seed: u64,
) -> Result<TriMask> {
    if points.is_empty() {
        return Err(Error::NoAnnotations);
    }
    if dist_clip.is_nan() || dist_clip <= 0.0 {
        return Err(Error::Config(format!("dist_clip must be positive, got {dist_clip}")));
    }
    points.check_bounds(image.height(), image.width())?;
    let feats = cluster_features(image, points, dist_clip)?;
    let km = kmeans(&feats, 4, 3, max_iters, seed)?;

    let mut counts = [0usize; 3];
    let mut sums = [[0.0f64; 4]; 3];
    for (i, &a) in km.assignments.iter().enumerate() {
        counts[a] += 1;
        for (s, f) in sums[a].iter_mut().zip(&feats[i * 4..i * 4 + 4]) {
            *s += f;
        }
    }
    let means: Vec<Option<[f64; 4]>> = (0..3)
        .map(|j| (counts[j] > 0).then(|| sums[j].map(|s| s / counts[j] as f64)))
        .collect();

    let live: Vec<[f64; 4]> = means.iter().flatten().copied().collect();
    let colour_spread = live
        .iter()
        .flat_map(|a| {
            live.iter()
                .map(move |b| (1..4).map(|c| (a[c] - b[c]).abs()).fold(0.0, f64::max))
        })
        .fold(0.0, f64::max);
    if colour_spread <= 1e-9 {
        return Err(Error::DegenerateClustering(
            "cluster colours coincide; the image carries no separable signal".into(),
        ));
    }

    let mut votes = [0usize; 3];
    let w = image.width();
    for p in points.iter() {
        votes[km.assignments[p.row * w + p.col]] += 1;
    }
    let fg = (0..3).fold(0, |best, j| if votes[j] > votes[best] { j } else { best });
    let bg = (0..3)
        .filter(|&j| means[j].is_some())
        .fold(None, |best: Option<usize>, j| match best {
            Some(b) if means[b].unwrap()[0] >= means[j].unwrap()[0] => Some(b),
            _ => Some(j),
        })
        .expect("at least one cluster is populated");
    if fg == bg {
        return Err(Error::DegenerateClustering(format!(
            "foreground and background both resolve to cluster {fg}"
        )));
    }

    let index = NearestPoints::new(points.points(), image.height(), image.width());
    Ok(Raster::from_fn(image.height(), image.width(), |r, c| {
        let a = km.assignments[r * w + c];
        if a == fg {
            Tri::Foreground(index.nearest(Point::new(r, c)).0 as u32 + 1)
        } else if a == bg {
            Tri::Background
        } else {
            Tri::Ignore
        }
    }))
}

/// Binary cross-entropy over non-ignored pixels, averaged over their count.
///
/// `pred` is clamped to `[eps_log, 1 - eps_log]`; the gradient is zero where
/// the clamp is active and on ignored pixels.
pub fn masked_cross_entropy(pred: &RasterF32, mask: &TriMask, eps_log: f64) -> Result<LossGrad> {
    pred.ensure_same_shape(mask)?;
    let n = mask.iter().filter(|t| !matches!(t, Tri::Ignore)).count();
    if n == 0 {
        return Err(Error::NoSupervisedPixels);
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0f64;
    let mut grad = RasterF32::filled(pred.height(), pred.width(), 0.0);
    for i in 0..pred.len() {
        let y = match mask[i] {
            Tri::Foreground(_) => true,
            Tri::Background => false,
            Tri::Ignore => continue,
        };
        let raw = pred[i] as f64;
        let p = raw.clamp(eps_log, 1.0 - eps_log);
        let inside = raw == p;
        if y {
            loss -= p.ln();
            if inside {
                grad[i] = (-inv_n / p) as f32;
            }
        } else {
            loss -= (1.0 - p).ln();
            if inside {
                grad[i] = (inv_n / (1.0 - p)) as f32;
            }
        }
    }
    Ok(LossGrad {
        loss: loss * inv_n,
        grad,
    })
}
