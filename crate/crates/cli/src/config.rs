//! Config resolution: defaults, then a JSON file, then individual flags.

use std::path::PathBuf;

use clap::Args;
use nucseg_core::{Connectivity, PipelineConfig};

use crate::{CliError, CliResult};

fn parse_connectivity(s: &str) -> Result<Connectivity, String> {
    match s {
        "4" => Ok(Connectivity::Four),
        "8" => Ok(Connectivity::Eight),
        _ => Err(format!("expected 4 or 8, got {s:?}")),
    }
}

/// Flags shared by every subcommand. Each override mirrors a field of the
/// JSON config.
#[derive(Args, Clone, Debug, Default)]
pub struct ConfigArgs {
    /// JSON config file; unspecified fields keep their defaults.
    #[arg(long, global = true, env = "BONUS_CONFIG", value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    #[arg(long, global = true)]
    pub r1: Option<f64>,
    #[arg(long, global = true)]
    pub r2: Option<f64>,
    #[arg(long, global = true)]
    pub w_fg: Option<f64>,
    #[arg(long, global = true)]
    pub w_bg: Option<f64>,
    #[arg(long, global = true)]
    pub peak_threshold: Option<f32>,
    #[arg(long, global = true)]
    pub k_neighbors: Option<usize>,
    #[arg(long, global = true)]
    pub curriculum_period_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub existing_radius: Option<f64>,
    #[arg(long, global = true)]
    pub t_f: Option<f32>,
    #[arg(long, global = true)]
    pub t_b: Option<f32>,
    #[arg(long, global = true)]
    pub gamma: Option<usize>,
    #[arg(long, global = true)]
    pub offset_stride: Option<usize>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub eps_log: Option<f64>,
    #[arg(long, global = true)]
    pub bin_threshold: Option<f32>,
    #[arg(long, global = true)]
    pub min_object_area: Option<usize>,
    #[arg(long, global = true)]
    pub hole_fill_area: Option<usize>,
    /// Pixel connectivity, 4 or 8.
    #[arg(long, global = true, value_parser = parse_connectivity)]
    pub connectivity: Option<Connectivity>,
    #[arg(long, global = true)]
    pub match_radius: Option<f64>,
    #[arg(long, global = true)]
    pub fg_radius: Option<f64>,
    #[arg(long, global = true)]
    pub dist_clip: Option<f64>,
    #[arg(long, global = true)]
    pub kmeans_max_iters: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

macro_rules! apply {
    ($cfg:ident, $args:ident, $($field:ident),* $(,)?) => {
        $(if let Some(v) = $args.$field { $cfg.$field = v; })*
    };
}

impl ConfigArgs {
    pub fn resolve(&self) -> CliResult<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                serde_json::from_str::<PipelineConfig>(&text).map_err(|e| {
                    CliError::Usage(format!(
                        "{}: line {} column {}: {e}",
                        path.display(),
                        e.line(),
                        e.column()
                    ))
                })?
            }
            None => PipelineConfig::default(),
        };
        apply!(
            cfg,
            self,
            sigma,
            r1,
            r2,
            w_fg,
            w_bg,
            peak_threshold,
            k_neighbors,
            curriculum_period_epochs,
            t_f,
            t_b,
            gamma,
            offset_stride,
            beta,
            eps_log,
            bin_threshold,
            min_object_area,
            hole_fill_area,
            connectivity,
            match_radius,
            fg_radius,
            dist_clip,
            kmeans_max_iters,
            seed,
        );
        if let Some(r) = self.existing_radius {
            cfg.existing_radius = Some(r);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
