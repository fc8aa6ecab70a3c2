//! Non-neural building blocks for training and evaluating nuclei instance
//! segmentation from point annotations.
//!
//! The crate covers the whole label-engineering side of a point-supervised
//! pipeline:
//!
//! - [`heatmap`]: Gaussian detection targets, the weighted regression loss and
//!   peak decoding.
//! - [`curriculum`]: difficulty scoring and admission of detector outputs as
//!   pseudo point labels.
//! - [`coarse`]: Voronoi and k-means cluster tri-state masks and the masked
//!   cross-entropy used to fit them.
//! - [`affinity`]: pairwise affinity supervision and the path-max boundary
//!   loss with its gradient.
//! - [`postprocess`]: turning segmentation and boundary maps into instances.
//! - [`metrics`]: detection P/R/F1 and the pixel, object and panoptic
//!   segmentation scores.
//!
//! Every loss kernel returns its gradient with respect to the prediction
//! raster so that any training framework can consume it.

pub mod affinity;
pub mod coarse;
pub mod config;
pub mod curriculum;
pub mod error;
pub mod gradcheck;
pub mod heatmap;
pub mod metrics;
pub mod nearest;
pub mod postprocess;
pub mod raster;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use raster::{
    component_stats, connected_components, BinaryMask, ComponentStats, Connectivity, InstanceMap, Point, PointSet,
    Raster, RasterF32, Tri, TriMask,
};

/// Scalar loss with its gradient with respect to the prediction raster.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: RasterF32,
}
