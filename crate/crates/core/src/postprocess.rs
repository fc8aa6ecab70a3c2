//! Segmentation + boundary maps to instances: subtract, binarize, clean up,
//! label, then grow each instance by one pixel.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::raster::{connected_components, BinaryMask, Connectivity, InstanceMap, RasterF32};

/// Fills background regions smaller than `max_area` pixels that do not
/// touch the raster border. Background regions are 4-connected.
pub fn fill_holes(mask: &BinaryMask, max_area: usize) -> BinaryMask {
    let background = mask.map(|&b| !b);
    let regions = connected_components(&background, Connectivity::Four);
    let (h, w) = mask.shape();
    let mut touches = vec![false; regions.iter().copied().max().unwrap_or(0) as usize + 1];
    for r in 0..h {
        for c in 0..w {
            if r == 0 || c == 0 || r == h - 1 || c == w - 1 {
                touches[regions.get(r, c) as usize] = true;
            }
        }
    }
    let areas = regions.areas();
    let mut out = mask.clone();
    for i in 0..out.len() {
        let id = regions[i];
        if id != 0 && !touches[id as usize] && areas[&id] < max_area {
            out[i] = true;
        }
    }
    out
}

/// Drops connected components smaller than `min_area` pixels.
pub fn remove_small(mask: &BinaryMask, min_area: usize, connectivity: Connectivity) -> BinaryMask {
    let cc = connected_components(mask, connectivity);
    let areas = cc.areas();
    cc.map(|&id| id != 0 && areas[&id] >= min_area)
}

/// Grows every instance by the radius-1 lattice disk (the 4-neighbour
/// cross). Only background pixels are claimed; a pixel reached by several
/// instances goes to the lowest id.
pub fn dilate_disk1(instances: &InstanceMap) -> InstanceMap {
    let mut out = instances.clone();
    let (h, w) = instances.shape();
    for r in 0..h {
        for c in 0..w {
            if instances.get(r, c) != 0 {
                continue;
            }
            let mut best = 0u32;
            for (dr, dc) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if instances.contains(nr, nc) {
                    let id = instances.get(nr as usize, nc as usize);
                    if id != 0 && (best == 0 || id < best) {
                        best = id;
                    }
                }
            }
            out.set(r, c, best);
        }
    }
    out
}

/// Steps up to and including component labelling, before dilation.
pub fn segment_instances(seg: &RasterF32, boundary: &RasterF32, cfg: &PipelineConfig) -> Result<InstanceMap> {
    seg.ensure_same_shape(boundary)?;
    if !seg.all_finite() || !boundary.all_finite() {
        return Err(Error::InvalidRaster(
            "non-finite values in segmentation or boundary map".into(),
        ));
    }
    let mut diff = seg.clone();
    for (d, &b) in diff.as_mut_slice().iter_mut().zip(boundary.iter()) {
        *d = (*d - b).clamp(0.0, 1.0);
    }
    let binary = diff.binarize(cfg.bin_threshold);
    let filled = fill_holes(&binary, cfg.hole_fill_area);
    let cleaned = remove_small(&filled, cfg.min_object_area, cfg.connectivity);
    Ok(connected_components(&cleaned, cfg.connectivity))
}

/// Full inference post-processing.
pub fn instance_postprocess(seg: &RasterF32, boundary: &RasterF32, cfg: &PipelineConfig) -> Result<InstanceMap> {
    Ok(dilate_disk1(&segment_instances(seg, boundary, cfg)?))
}
