//! Boundary supervision from pairwise pixel affinities.
//!
//! A coarse foreground-probability map is split with two thresholds into
//! confident instances, confident background and an uncertain band. Every
//! confident pixel is paired with its neighbours inside a disk of radius
//! `gamma`; a pair is positive when both pixels share an instance (or are
//! both background) and negative otherwise. The fine model's boundary map
//! predicts the affinity of a pair as one minus the largest boundary value
//! on the digital line joining them, and the boundary loss is a
//! cross-entropy over the four pair subsets, each averaged separately.

mod path;

pub use path::{canonical, path_pixels};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{connected_components, BinaryMask, Connectivity, InstanceMap, Point, Raster, RasterF32};
use crate::LossGrad;

/// Thresholded coarse prediction.
#[derive(Clone, Debug)]
pub struct CoarseInstancePrediction {
    pub prob: RasterF32,
    /// Components of `prob > t_f`.
    pub instances: InstanceMap,
    /// `t_b <= prob <= t_f`.
    pub uncertain: BinaryMask,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PixelClass {
    Instance(u32),
    Background,
    Uncertain,
}

impl CoarseInstancePrediction {
    pub fn from_probability(prob: RasterF32, t_f: f32, t_b: f32, connectivity: Connectivity) -> Result<Self> {
        if !(0.0 < t_b && t_b < t_f && t_f < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < t_b < t_f < 1, got t_b={t_b} t_f={t_f}"
            )));
        }
        if !prob.all_finite() {
            return Err(Error::InvalidRaster("coarse probability has non-finite values".into()));
        }
        let instances = connected_components(&prob.binarize(t_f), connectivity);
        let uncertain = prob.map(|&p| t_b <= p && p <= t_f);
        Ok(Self {
            prob,
            instances,
            uncertain,
        })
    }

    #[inline]
    pub fn class_at(&self, index: usize) -> PixelClass {
        match self.instances[index] {
            0 if self.uncertain[index] => PixelClass::Uncertain,
            0 => PixelClass::Background,
            id => PixelClass::Instance(id),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.prob.shape()
    }
}

/// The four disjoint supervised pair subsets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Subset {
    /// Same instance; affinity 1.
    FgPos = 0,
    /// Different instances; affinity 0.
    FgNeg = 1,
    /// Both background; affinity 1.
    BgPos = 2,
    /// One instance pixel, one background pixel; affinity 0.
    CrossNeg = 3,
}

impl Subset {
    pub const ALL: [Subset; 4] = [Subset::FgPos, Subset::FgNeg, Subset::BgPos, Subset::CrossNeg];

    /// Affinity label: 1 for the positive subsets, 0 for the negative ones.
    pub fn label(self) -> u8 {
        match self {
            Subset::FgPos | Subset::BgPos => 1,
            Subset::FgNeg | Subset::CrossNeg => 0,
        }
    }

    pub fn is_positive(self) -> bool {
        self.label() == 1
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }
}

/// Affinity of two classified pixels; `None` is the ignored label (-1).
pub fn classify(a: PixelClass, b: PixelClass) -> Option<Subset> {
    use PixelClass::*;
    match (a, b) {
        (Uncertain, _) | (_, Uncertain) => None,
        (Instance(x), Instance(y)) if x == y => Some(Subset::FgPos),
        (Instance(_), Instance(_)) => Some(Subset::FgNeg),
        (Background, Background) => Some(Subset::BgPos),
        _ => Some(Subset::CrossNeg),
    }
}

/// One supervised pixel pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AffinityPair {
    pub a: Point,
    pub b: Point,
    pub subset: Subset,
}

impl AffinityPair {
    pub fn label(&self) -> u8 {
        self.subset.label()
    }
}

/// Lattice offsets `(dr, dc)` with `0 < dr^2 + dc^2 <= gamma^2` in the upper
/// half-disk (`dr > 0`, or `dr == 0` and `dc > 0`), in row-major order,
/// keeping every `stride`-th one.
pub fn half_disk_offsets(gamma: usize, stride: usize) -> Vec<(i32, i32)> {
    let g = gamma as i32;
    let stride = stride.max(1);
    (0..=g)
        .flat_map(|dr| (-g..=g).map(move |dc| (dr, dc)))
        .filter(|&(dr, dc)| (dr > 0 || (dr == 0 && dc > 0)) && dr * dr + dc * dc <= g * g)
        .enumerate()
        .filter(|(i, _)| i % stride == 0)
        .map(|(_, o)| o)
        .collect()
}

/// Compact storage for one pair: anchor pixel (the row-major-first
/// endpoint), index into the offset table, subset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairRecord {
    pub anchor: u32,
    pub offset: u16,
    pub subset: Subset,
}

/// Supervised pairs of one image, sharing a table of canonical offsets.
///
/// Every pair is stored from its row-major-first endpoint, so each
/// unordered pair has exactly one representation and the path between the
/// endpoints is a translated copy of its offset's template.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityPairs {
    height: usize,
    width: usize,
    offsets: Vec<(i32, i32)>,
    records: Vec<PairRecord>,
    templates: Vec<Vec<isize>>,
}

fn is_canonical((dr, dc): (i32, i32)) -> bool {
    dr > 0 || (dr == 0 && dc >= 0)
}

impl AffinityPairs {
    /// Validates and assembles a pair set. Offsets must be canonical, and
    /// every pair must stay inside the raster.
    pub fn from_parts(height: usize, width: usize, offsets: Vec<(i32, i32)>, records: Vec<PairRecord>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidRaster("dimensions must be positive".into()));
        }
        if offsets.len() > u16::MAX as usize + 1 {
            return Err(Error::Config(format!(
                "{} offsets exceed the table limit",
                offsets.len()
            )));
        }
        if let Some(o) = offsets.iter().find(|&&o| !is_canonical(o)) {
            return Err(Error::Config(format!("offset {o:?} is not in the upper half-plane")));
        }
        for (i, r) in records.iter().enumerate() {
            let (dr, dc) = *offsets
                .get(r.offset as usize)
                .ok_or_else(|| Error::Config(format!("pair {i} references missing offset {}", r.offset)))?;
            let anchor = r.anchor as usize;
            let (row, col) = (anchor / width, anchor % width);
            let (br, bc) = (row as i64 + dr as i64, col as i64 + dc as i64);
            if anchor >= height * width || br < 0 || bc < 0 || br >= height as i64 || bc >= width as i64 {
                return Err(Error::Config(format!("pair {i} leaves the {height}x{width} raster")));
            }
        }
        let templates = offsets
            .iter()
            .map(|&(dr, dc)| {
                path::line_offsets(dr as isize, dc as isize)
                    .into_iter()
                    .map(|(r, c)| r * width as isize + c)
                    .collect()
            })
            .collect();
        Ok(Self {
            height,
            width,
            offsets,
            records,
            templates,
        })
    }

    /// Packs arbitrary pairs, in the given order.
    pub fn from_pairs(height: usize, width: usize, pairs: &[AffinityPair]) -> Result<Self> {
        let mut offsets: Vec<(i32, i32)> = Vec::new();
        let mut lookup = std::collections::HashMap::new();
        let mut records = Vec::with_capacity(pairs.len());
        for (i, p) in pairs.iter().enumerate() {
            if p.a.row >= height || p.a.col >= width || p.b.row >= height || p.b.col >= width {
                return Err(Error::Config(format!("pair {i} leaves the {height}x{width} raster")));
            }
            let (s, t) = canonical(p.a, p.b);
            let off = ((t.row - s.row) as i32, t.col as i32 - s.col as i32);
            let idx = *lookup.entry(off).or_insert_with(|| {
                offsets.push(off);
                offsets.len() - 1
            });
            records.push(PairRecord {
                anchor: (s.row * width + s.col) as u32,
                offset: idx as u16,
                subset: p.subset,
            });
        }
        Self::from_parts(height, width, offsets, records)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }

    pub fn records(&self) -> &[PairRecord] {
        &self.records
    }

    pub fn pair(&self, i: usize) -> AffinityPair {
        let r = self.records[i];
        let (dr, dc) = self.offsets[r.offset as usize];
        let anchor = r.anchor as usize;
        let a = Point::new(anchor / self.width, anchor % self.width);
        let b = Point::new((a.row as i64 + dr as i64) as usize, (a.col as i64 + dc as i64) as usize);
        AffinityPair { a, b, subset: r.subset }
    }

    pub fn iter(&self) -> impl Iterator<Item = AffinityPair> + '_ {
        (0..self.len()).map(move |i| self.pair(i))
    }

    /// Number of pairs per subset, indexed by `Subset as usize`.
    pub fn counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for r in &self.records {
            c[r.subset as usize] += 1;
        }
        c
    }

    /// Largest boundary value on pair `i`'s path and the linear index of
    /// the pixel holding it (lowest row-major index among equal maxima).
    #[inline]
    pub fn path_max(&self, boundary: &[f32], i: usize) -> (f32, usize) {
        let r = self.records[i];
        let anchor = r.anchor as isize;
        let mut best = f32::NEG_INFINITY;
        let mut arg = usize::MAX;
        for &d in &self.templates[r.offset as usize] {
            let j = (anchor + d) as usize;
            let v = boundary[j];
            if v > best || (v == best && j < arg) {
                best = v;
                arg = j;
            }
        }
        (best, arg)
    }
}

/// Sequential or rayon-parallel evaluation. Both produce bit-identical
/// results.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    Parallel,
}

/// All supervised pairs between confident pixels and their neighbours at
/// the given canonical `offsets`, anchor-major then offset order.
pub fn build_affinity_pairs(
    coarse: &CoarseInstancePrediction,
    offsets: &[(i32, i32)],
    exec: Execution,
) -> Result<AffinityPairs> {
    let (h, w) = coarse.shape();
    if let Some(o) = offsets.iter().find(|&&o| !is_canonical(o) || o == (0, 0)) {
        return Err(Error::Config(format!(
            "offset {o:?} is not in the open upper half-disk"
        )));
    }
    let row_pairs = |row: usize| -> Vec<PairRecord> {
        let mut out = Vec::new();
        for col in 0..w {
            let a = row * w + col;
            let ca = coarse.class_at(a);
            if ca == PixelClass::Uncertain {
                continue;
            }
            for (k, &(dr, dc)) in offsets.iter().enumerate() {
                let (br, bc) = (row as i64 + dr as i64, col as i64 + dc as i64);
                if br >= h as i64 || bc < 0 || bc >= w as i64 {
                    continue;
                }
                let b = br as usize * w + bc as usize;
                if let Some(subset) = classify(ca, coarse.class_at(b)) {
                    out.push(PairRecord {
                        anchor: a as u32,
                        offset: k as u16,
                        subset,
                    });
                }
            }
        }
        out
    };
    let records: Vec<PairRecord> = match exec {
        Execution::Sequential => (0..h).flat_map(row_pairs).collect(),
        Execution::Parallel => {
            let rows: Vec<Vec<PairRecord>> = (0..h).into_par_iter().map(row_pairs).collect();
            rows.concat()
        }
    };
    AffinityPairs::from_parts(h, w, offsets.to_vec(), records)
}

/// Predicted affinity of one pair: `1 - max` of `boundary` along the path,
/// by direct enumeration of the path pixels.
pub fn affinity_from_boundary(boundary: &RasterF32, a: Point, b: Point) -> f32 {
    1.0 - path_pixels(a, b)
        .into_iter()
        .map(|p| boundary[p])
        .fold(f32::NEG_INFINITY, f32::max)
}

/// Predicted affinity of every pair, using the offset templates.
pub fn affinities(boundary: &RasterF32, pairs: &AffinityPairs, exec: Execution) -> Result<Vec<f32>> {
    check_pairs_shape(boundary, pairs)?;
    let b = boundary.as_slice();
    let f = |i: usize| 1.0 - pairs.path_max(b, i).0;
    Ok(match exec {
        Execution::Sequential => (0..pairs.len()).map(f).collect(),
        Execution::Parallel => (0..pairs.len()).into_par_iter().map(f).collect(),
    })
}

fn check_pairs_shape(boundary: &RasterF32, pairs: &AffinityPairs) -> Result<()> {
    crate::error::check_shape(pairs.shape(), boundary.shape())
}

/// Boundary loss over the four pair subsets and its gradient with respect
/// to the boundary map.
///
/// Each subset contributes the mean of `-ln a` (positive subsets) or
/// `-ln(1 - a)` (negative subsets), with `a` clamped to
/// `[eps_log, 1 - eps_log]`; empty subsets contribute nothing. A pair's
/// derivative flows entirely to its path maximum.
pub fn boundary_loss(boundary: &RasterF32, pairs: &AffinityPairs, eps_log: f64, exec: Execution) -> Result<LossGrad> {
    check_pairs_shape(boundary, pairs)?;
    if !boundary.all_finite() {
        return Err(Error::InvalidRaster("boundary map has non-finite values".into()));
    }
    let counts = pairs.counts();
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::NoSupervisionPairs);
    }
    let b = boundary.as_slice();
    let f = |i: usize| pairs.path_max(b, i);
    let maxima: Vec<(f32, usize)> = match exec {
        Execution::Sequential => (0..pairs.len()).map(f).collect(),
        Execution::Parallel => (0..pairs.len()).into_par_iter().map(f).collect(),
    };

    let inv: [f64; 4] = counts.map(|c| if c > 0 { 1.0 / c as f64 } else { 0.0 });
    let mut sums = [0.0f64; 4];
    let mut grad = vec![0.0f64; b.len()];
    for (rec, &(m, arg)) in pairs.records().iter().zip(&maxima) {
        let s = rec.subset as usize;
        let raw = 1.0 - m as f64;
        let a = raw.clamp(eps_log, 1.0 - eps_log);
        let inside = raw == a;
        if rec.subset.is_positive() {
            sums[s] -= a.ln();
            if inside {
                grad[arg] += inv[s] / a;
            }
        } else {
            sums[s] -= (1.0 - a).ln();
            if inside {
                grad[arg] -= inv[s] / (1.0 - a);
            }
        }
    }
    let loss = (0..4).map(|s| sums[s] * inv[s]).sum();
    let (h, w) = boundary.shape();
    let grad = Raster::from_vec(h, w, grad.into_iter().map(|g| g as f32).collect())?;
    Ok(LossGrad { loss, grad })
}

/// Pixels where the gradient of [`boundary_loss`] is not locally smooth:
/// on some pair's path, this pixel and another one both lie within `tol` of
/// the path maximum.
pub fn boundary_tie_mask(boundary: &RasterF32, pairs: &AffinityPairs, tol: f32) -> Result<BinaryMask> {
    check_pairs_shape(boundary, pairs)?;
    let b = boundary.as_slice();
    let mut mask = boundary.map(|_| false);
    for i in 0..pairs.len() {
        let p = pairs.pair(i);
        let path = path_pixels(p.a, p.b);
        let (top, _) = pairs.path_max(b, i);
        let near: Vec<Point> = path.into_iter().filter(|&q| top - boundary[q] < tol).collect();
        if near.len() > 1 {
            for q in near {
                mask[q] = true;
            }
        }
    }
    Ok(mask)
}

/// Fine-stage objective `l_vor + l_clu + beta * l_boundary`.
pub fn total_fine_loss(l_vor: f64, l_clu: f64, l_boundary: f64, beta: f64) -> f64 {
    l_vor + l_clu + beta * l_boundary
}

/// Gradient of [`total_fine_loss`] with respect to the boundary map.
pub fn fine_boundary_grad(boundary: &LossGrad, beta: f64) -> RasterF32 {
    boundary.grad.map(|&g| (beta * g as f64) as f32)
}
