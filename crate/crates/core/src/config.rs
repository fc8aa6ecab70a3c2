use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Connectivity;

/// Every tunable of the pipeline in one place. Field names double as the
/// JSON config schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Gaussian std-dev of detection targets, pixels.
    pub sigma: f64,
    /// Foreground radius of detection targets.
    pub r1: f64,
    /// Outer radius of the background band; farther pixels are ignored.
    pub r2: f64,
    pub w_fg: f64,
    pub w_bg: f64,
    pub peak_threshold: f32,
    pub k_neighbors: usize,
    /// Epochs between curriculum rounds. Informational: rounds are driven by
    /// the caller.
    pub curriculum_period_epochs: usize,
    /// Overlap radius against existing labels; `None` means `r1`.
    pub existing_radius: Option<f64>,
    pub t_f: f32,
    pub t_b: f32,
    pub gamma: usize,
    /// Keep every n-th affinity offset.
    pub offset_stride: usize,
    pub beta: f64,
    pub eps_log: f64,
    pub bin_threshold: f32,
    pub min_object_area: usize,
    pub hole_fill_area: usize,
    pub connectivity: Connectivity,
    pub match_radius: f64,
    /// Foreground disk radius in Voronoi labels.
    pub fg_radius: f64,
    /// Distance clip for the cluster-label distance feature.
    pub dist_clip: f64,
    pub kmeans_max_iters: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sigma: 4.0,
            r1: 8.0,
            r2: 15.0,
            w_fg: 1.0,
            w_bg: 0.1,
            peak_threshold: 0.65,
            k_neighbors: 4,
            curriculum_period_epochs: 30,
            existing_radius: None,
            t_f: 0.6,
            t_b: 0.05,
            gamma: 8,
            offset_stride: 1,
            beta: 0.1,
            eps_log: 1e-7,
            bin_threshold: 0.5,
            min_object_area: 20,
            hole_fill_area: 20,
            connectivity: Connectivity::Eight,
            match_radius: 6.0,
            fg_radius: 2.0,
            dist_clip: 20.0,
            kmeans_max_iters: 100,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.sigma.is_nan() || self.sigma <= 0.0 {
            return fail(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(0.0 < self.r1 && self.r1 < self.r2) {
            return fail(format!("need 0 < r1 < r2, got r1={} r2={}", self.r1, self.r2));
        }
        if !(0.0 < self.t_b && self.t_b < self.t_f && self.t_f < 1.0) {
            return fail(format!("need 0 < t_b < t_f < 1, got t_b={} t_f={}", self.t_b, self.t_f));
        }
        if self.gamma < 1 {
            return fail("gamma must be >= 1".into());
        }
        if self.offset_stride < 1 {
            return fail("offset_stride must be >= 1".into());
        }
        if !(self.eps_log > 0.0 && self.eps_log <= 1e-3) {
            return fail(format!("eps_log must lie in (0, 1e-3], got {}", self.eps_log));
        }
        if self.match_radius.is_nan() || self.match_radius <= 0.0 {
            return fail("match_radius must be positive".into());
        }
        if self.dist_clip.is_nan() || self.dist_clip <= 0.0 {
            return fail("dist_clip must be positive".into());
        }
        if self.fg_radius < 0.0 {
            return fail("fg_radius must be non-negative".into());
        }
        if self.k_neighbors == 0 {
            return fail("k_neighbors must be >= 1".into());
        }
        if self.w_fg < 0.0 || self.w_bg < 0.0 {
            return fail("loss weights must be non-negative".into());
        }
        Ok(())
    }

    pub fn existing_radius(&self) -> f64 {
        self.existing_radius.unwrap_or(self.r1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        PipelineConfig::default().validate().unwrap();
        assert_eq!(PipelineConfig::default().existing_radius(), 8.0);
    }

    #[test]
    fn rejects_broken_invariants() {
        let bad = [
            PipelineConfig {
                r1: 15.0,
                ..Default::default()
            },
            PipelineConfig {
                t_b: 0.7,
                ..Default::default()
            },
            PipelineConfig {
                t_f: 1.0,
                ..Default::default()
            },
            PipelineConfig {
                gamma: 0,
                ..Default::default()
            },
            PipelineConfig {
                eps_log: 1e-2,
                ..Default::default()
            },
            PipelineConfig {
                eps_log: 0.0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }
}
