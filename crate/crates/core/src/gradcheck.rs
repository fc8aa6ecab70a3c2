//! Central finite-difference check of an analytic gradient.
//!
//! Each checked pixel is nudged by `±step` in f32; the difference quotient
//! divides by the step actually realised after rounding, so only the loss
//! evaluation's own rounding and the truncation error remain.

use serde::Serialize;

use crate::error::Result;
use crate::raster::RasterF32;

/// Denominator floor for relative errors of vanishing gradients.
pub const REL_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub step: f32,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Linear index of the pixel with the largest relative error.
    pub worst_index: Option<usize>,
}

/// `|a - b| / max(|a|, |b|, REL_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences of `loss` at `x`, on
/// every pixel for which `include` returns true.
pub fn check_gradient(
    x: &RasterF32,
    analytic: &RasterF32,
    step: f32,
    include: impl Fn(usize) -> bool,
    loss: impl Fn(&RasterF32) -> Result<f64>,
) -> Result<GradCheckReport> {
    x.ensure_same_shape(analytic)?;
    let mut probe = x.clone();
    let mut report = GradCheckReport {
        step,
        checked: 0,
        skipped: 0,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_index: None,
    };
    for i in 0..x.len() {
        if !include(i) {
            report.skipped += 1;
            continue;
        }
        let x0 = x[i];
        let (hi, lo) = (x0 + step, x0 - step);
        probe[i] = hi;
        let l_hi = loss(&probe)?;
        probe[i] = lo;
        let l_lo = loss(&probe)?;
        probe[i] = x0;
        let fd = (l_hi - l_lo) / (hi as f64 - lo as f64);
        let g = analytic[i] as f64;
        let rel = relative_error(fd, g);
        report.checked += 1;
        report.max_abs_error = report.max_abs_error.max((fd - g).abs());
        if report.worst_index.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = Some(i);
        }
    }
    Ok(report)
}
