//! Exact nearest-annotation queries on the pixel lattice.
//!
//! Points are bucketed into a uniform grid of square cells covering the
//! raster; a query scans rings of cells outward from its own cell until no
//! unvisited cell can hold a closer point. Distances are compared as exact
//! integer squared distances, ties go to the lower point index.

use crate::raster::Point;

pub struct NearestPoints<'a> {
    points: &'a [Point],
    cell: usize,
    grid_h: usize,
    grid_w: usize,
    buckets: Vec<Vec<u32>>,
}

impl<'a> NearestPoints<'a> {
    /// Indexes `points` for queries inside a `height` x `width` raster.
    ///
    /// Panics if `points` is empty.
    pub fn new(points: &'a [Point], height: usize, width: usize) -> Self {
        assert!(!points.is_empty(), "nearest-point index needs at least one point");
        let area = (height * width) as f64;
        // About two points per cell.
        let cell = ((2.0 * area / points.len() as f64).sqrt().ceil() as usize).max(1);
        let grid_h = height.div_ceil(cell).max(1);
        let grid_w = width.div_ceil(cell).max(1);
        let mut buckets = vec![Vec::new(); grid_h * grid_w];
        for (i, p) in points.iter().enumerate() {
            let gr = (p.row / cell).min(grid_h - 1);
            let gc = (p.col / cell).min(grid_w - 1);
            buckets[gr * grid_w + gc].push(i as u32);
        }
        Self {
            points,
            cell,
            grid_h,
            grid_w,
            buckets,
        }
    }

    /// Index of the closest point and its squared distance.
    pub fn nearest(&self, q: Point) -> (usize, u64) {
        let gr = (q.row / self.cell).min(self.grid_h - 1) as isize;
        let gc = (q.col / self.cell).min(self.grid_w - 1) as isize;
        let mut best: Option<(u64, u32)> = None;
        let max_ring = self.grid_h.max(self.grid_w) as isize;
        for ring in 0..=max_ring {
            for r in (gr - ring)..=(gr + ring) {
                if r < 0 || r >= self.grid_h as isize {
                    continue;
                }
                let on_edge_row = r == gr - ring || r == gr + ring;
                let step = if on_edge_row { 1 } else { (2 * ring).max(1) as usize };
                let mut c = gc - ring;
                while c <= gc + ring {
                    if c >= 0 && c < self.grid_w as isize {
                        for &i in &self.buckets[r as usize * self.grid_w + c as usize] {
                            let d2 = q.dist2(self.points[i as usize]);
                            if best.is_none_or(|b| (d2, i) < b) {
                                best = Some((d2, i));
                            }
                        }
                    }
                    c += step as isize;
                }
            }
            // Anything beyond this ring is at least ring*cell + 1 away along
            // one axis.
            if let Some((d2, _)) = best {
                let bound = (ring as u64) * self.cell as u64 + 1;
                if d2 < bound * bound {
                    break;
                }
            }
        }
        let (d2, i) = best.expect("index holds at least one point");
        (i as usize, d2)
    }
}
