//! Grid types shared by every kernel, plus connected components and the
//! distance-to-annotation map.

use std::collections::{BTreeMap, HashSet};
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::nearest::NearestPoints;

/// Dense row-major grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

/// Heatmaps, probability maps, distance maps and gradients.
pub type RasterF32 = Raster<f32>;

/// Instance ids per pixel; 0 is background.
pub type InstanceMap = Raster<u32>;

pub type BinaryMask = Raster<bool>;

/// Per-pixel supervision class of a tri-state mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Tri {
    /// Foreground belonging to instance `id` (always positive).
    Foreground(u32),
    Background,
    #[default]
    Ignore,
}

pub type TriMask = Raster<Tri>;

impl<T> Raster<T> {
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidRaster(format!(
                "dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::InvalidRaster(format!(
                "{height}x{width} raster needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    /// Builds a raster by evaluating `f(row, col)` at every pixel.
    ///
    /// Panics if either dimension is zero.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(height > 0 && width > 0, "raster dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`.
    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index_of(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }

    #[inline]
    pub fn point_of(&self, index: usize) -> Point {
        Point::new(index / self.width, index % self.width)
    }

    #[inline]
    pub fn contains(&self, row: isize, col: isize) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn ensure_same_shape<U>(&self, other: &Raster<U>) -> Result<()> {
        check_shape(self.shape(), other.shape())
    }
}

impl<T: Clone> Raster<T> {
    /// Panics if either dimension is zero.
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        assert!(height > 0 && width > 0, "raster dimensions must be positive");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }
}

impl<T: Copy> Raster<T> {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[self.index_of(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        let i = self.index_of(row, col);
        self.data[i] = value;
    }
}

impl<T> Index<usize> for Raster<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.data[i]
    }
}

impl<T> IndexMut<usize> for Raster<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.data[i]
    }
}

impl<T> Index<Point> for Raster<T> {
    type Output = T;
    fn index(&self, p: Point) -> &T {
        &self.data[p.row * self.width + p.col]
    }
}

impl<T> IndexMut<Point> for Raster<T> {
    fn index_mut(&mut self, p: Point) -> &mut T {
        &mut self.data[p.row * self.width + p.col]
    }
}

impl RasterF32 {
    /// Pixels strictly above `threshold` become `true`.
    pub fn binarize(&self, threshold: f32) -> BinaryMask {
        self.map(|&v| v > threshold)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

impl InstanceMap {
    /// Distinct nonzero ids in ascending order.
    pub fn ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .data
            .iter()
            .copied()
            .filter(|&id| id != 0)
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn foreground(&self) -> BinaryMask {
        self.map(|&id| id != 0)
    }

    /// Pixel count per nonzero id.
    pub fn areas(&self) -> BTreeMap<u32, usize> {
        let mut areas = BTreeMap::new();
        for &id in self.data.iter().filter(|&&id| id != 0) {
            *areas.entry(id).or_insert(0) += 1;
        }
        areas
    }
}

/// Integer pixel coordinate. Ordering is row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    pub row: usize,
    pub col: usize,
}

impl Point {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn dist2(self, other: Point) -> u64 {
        let dr = self.row.abs_diff(other.row) as u64;
        let dc = self.col.abs_diff(other.col) as u64;
        dr * dr + dc * dc
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.dist2(other) as f64).sqrt()
    }
}

impl From<(usize, usize)> for Point {
    fn from((row, col): (usize, usize)) -> Self {
        Self { row, col }
    }
}

/// Ordered, duplicate-free point annotations with optional per-point scores.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointSet {
    points: Vec<Point>,
    scores: Option<Vec<f32>>,
}

impl PointSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        check_unique(&points)?;
        Ok(Self { points, scores: None })
    }

    pub fn with_scores(points: Vec<Point>, scores: Vec<f32>) -> Result<Self> {
        if points.len() != scores.len() {
            return Err(Error::InvalidPoints(format!(
                "{} points but {} scores",
                points.len(),
                scores.len()
            )));
        }
        check_unique(&points)?;
        Ok(Self {
            points,
            scores: Some(scores),
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Fails if any point lies outside a `height` x `width` raster.
    pub fn check_bounds(&self, height: usize, width: usize) -> Result<()> {
        match self.points.iter().position(|p| p.row >= height || p.col >= width) {
            Some(i) => Err(Error::InvalidPoints(format!(
                "point {i} at ({}, {}) outside {height}x{width} raster",
                self.points[i].row, self.points[i].col
            ))),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn scores(&self) -> Option<&[f32]> {
        self.scores.as_deref()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    /// Appends the points of `other` that are not already present. Scores are
    /// dropped unless both sets carry them.
    pub fn merged(&self, other: &PointSet) -> PointSet {
        let seen: HashSet<Point> = self.points.iter().copied().collect();
        let mut points = self.points.clone();
        let mut scores = match (&self.scores, &other.scores) {
            (Some(a), Some(_)) => Some(a.clone()),
            _ => None,
        };
        for (i, &p) in other.points.iter().enumerate() {
            if !seen.contains(&p) {
                points.push(p);
                if let (Some(s), Some(o)) = (scores.as_mut(), other.scores.as_ref()) {
                    s.push(o[i]);
                }
            }
        }
        PointSet { points, scores }
    }
}

fn check_unique(points: &[Point]) -> Result<()> {
    let mut seen = HashSet::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if !seen.insert(*p) {
            return Err(Error::InvalidPoints(format!(
                "duplicate point {i} at ({}, {})",
                p.row, p.col
            )));
        }
    }
    Ok(())
}

/// Pixel adjacency used for component labelling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    pub fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        const EIGHT: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(format!("connectivity must be 4 or 8, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

/// Labels maximal connected `true` regions with ids 1, 2, ... in the
/// row-major order of each region's first pixel.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> InstanceMap {
    let (h, w) = mask.shape();
    let mut labels = Raster::filled(h, w, 0u32);
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for &(dr, dc) in connectivity.offsets() {
                let (nr, nc) = (r + dr, c + dc);
                if !mask.contains(nr, nc) {
                    continue;
                }
                let j = nr as usize * w + nc as usize;
                if mask[j] && labels[j] == 0 {
                    labels[j] = next;
                    stack.push(j);
                }
            }
        }
    }
    labels
}

/// Summary of one labelled component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComponentStats {
    pub area: usize,
    /// Mean `(row, col)` of member pixels.
    pub centroid: (f64, f64),
    pub mean_score: f64,
}

/// Area, centroid and mean score of every nonzero id in `instances`.
pub fn component_stats(instances: &InstanceMap, score: &RasterF32) -> Result<BTreeMap<u32, ComponentStats>> {
    instances.ensure_same_shape(score)?;
    // (area, sum_row, sum_col, sum_score)
    let mut acc: BTreeMap<u32, (usize, f64, f64, f64)> = BTreeMap::new();
    for (i, &id) in instances.iter().enumerate() {
        if id == 0 {
            continue;
        }
        let p = instances.point_of(i);
        let e = acc.entry(id).or_insert((0, 0.0, 0.0, 0.0));
        e.0 += 1;
        e.1 += p.row as f64;
        e.2 += p.col as f64;
        e.3 += score[i] as f64;
    }
    Ok(acc
        .into_iter()
        .map(|(id, (area, sr, sc, ss))| {
            let n = area as f64;
            (
                id,
                ComponentStats {
                    area,
                    centroid: (sr / n, sc / n),
                    mean_score: ss / n,
                },
            )
        })
        .collect())
}

/// Euclidean distance from every pixel center to the closest annotation.
pub fn distance_to_nearest_point(points: &PointSet, height: usize, width: usize) -> Result<RasterF32> {
    if points.is_empty() {
        return Err(Error::NoAnnotations);
    }
    if height == 0 || width == 0 {
        return Err(Error::InvalidRaster("dimensions must be positive".into()));
    }
    points.check_bounds(height, width)?;
    let index = NearestPoints::new(points.points(), height, width);
    Ok(Raster::from_fn(height, width, |r, c| {
        let (_, d2) = index.nearest(Point::new(r, c));
        (d2 as f64).sqrt() as f32
    }))
}
