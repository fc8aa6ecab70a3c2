//! Subcommands. Each one reads its inputs, calls a single kernel and writes
//! the result; JSON outputs embed the resolved config.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use nucseg_core::affinity::{self, CoarseInstancePrediction, Execution};
use nucseg_core::gradcheck::{check_gradient, GradCheckReport};
use nucseg_core::{coarse, curriculum, heatmap, metrics, postprocess};
use nucseg_core::{InstanceMap, PipelineConfig, Point, PointSet, Raster, RasterF32};

use crate::config::ConfigArgs;
use crate::{is_png, pairs_file, png, points, raster_file, trimask, CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "nucseg", version, about = "Point-supervised nuclei segmentation kernels")]
pub struct Cli {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Worker threads for pair kernels and batch lists.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Detection target raster from point annotations.
    Heatmap {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Weighted squared error between a prediction and a detection target.
    DetLoss {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        grad: Option<PathBuf>,
    },
    /// Point detections decoded from a predicted heatmap.
    Peaks {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One curriculum round: detections from a heatmap admitted against
    /// the existing labels.
    Curriculum {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        existing: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write existing and admitted points together.
        #[arg(long)]
        merged: bool,
    },
    /// Voronoi tri-state mask from points.
    Voronoi {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster tri-state mask from an RGB image and points.
    Cluster {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Masked cross-entropy of a probability map against a tri-state mask.
    CeLoss {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        grad: Option<PathBuf>,
    },
    /// Supervised pixel pairs from a coarse foreground probability map.
    AffinityPairs {
        #[arg(long)]
        coarse: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Boundary loss of a boundary map over a pairs file.
    BoundaryLoss {
        #[arg(long)]
        boundary: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        grad: Option<PathBuf>,
    },
    /// Finite-difference check of a loss gradient. Without inputs, runs on
    /// a random fixture drawn from the configured seed.
    Gradcheck {
        #[arg(value_enum)]
        kernel: Kernel,
        /// Prediction raster for det-loss and ce-loss.
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        boundary: Option<PathBuf>,
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Side of the random fixture.
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long)]
        step: Option<f32>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Instance map from segmentation and boundary rasters.
    Post {
        #[arg(long, required_unless_present = "list")]
        seg: Option<PathBuf>,
        #[arg(long, required_unless_present = "list")]
        boundary: Option<PathBuf>,
        /// `.png` writes a 16-bit PNG, anything else a u16 raster file.
        #[arg(long, required_unless_present = "list")]
        out: Option<PathBuf>,
        /// Batch list, one `SEG BOUNDARY OUT` triple per line.
        #[arg(long, conflicts_with_all = ["seg", "boundary", "out"])]
        list: Option<PathBuf>,
    },
    /// Segmentation metrics of a predicted instance map against ground truth.
    Eval {
        #[arg(long, required_unless_present = "list")]
        pred: Option<PathBuf>,
        #[arg(long, required_unless_present = "list")]
        gt: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Batch list, one `PRED GT JSON` triple per line.
        #[arg(long, conflicts_with_all = ["pred", "gt", "json"])]
        list: Option<PathBuf>,
    },
    /// Detection precision, recall and F1 between two point sets.
    EvalDet {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    DetLoss,
    CeLoss,
    BoundaryLoss,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    #[serde(flatten)]
    result: T,
    config: &'a PipelineConfig,
}

fn emit_json<T: Serialize>(path: Option<&Path>, command: &str, result: T, cfg: &PipelineConfig) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(&Report {
        command,
        result,
        config: cfg,
    })
    .map_err(anyhow::Error::from)?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| p.display().to_string())?,
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(anyhow::Error::from)?,
    }
    Ok(())
}

fn read_instances(path: &Path) -> anyhow::Result<InstanceMap> {
    if is_png(path) {
        png::read_instances(path)
    } else {
        raster_file::read_ids(path)
    }
}

fn write_instances(path: &Path, inst: &InstanceMap) -> anyhow::Result<()> {
    if is_png(path) {
        png::write_instances(path, inst)
    } else {
        raster_file::write(path, &png::to_u16(inst)?)
    }
}

fn read_trimask(path: &Path) -> anyhow::Result<nucseg_core::TriMask> {
    match raster_file::read(path)? {
        raster_file::AnyRaster::U16(r) => Ok(trimask::decode(&r)),
        other => Err(anyhow!(
            "{}: tri-state masks are u16 rasters, found {:?}",
            path.display(),
            other.dtype()
        )),
    }
}

fn write_grad(path: Option<&Path>, grad: &RasterF32) -> anyhow::Result<()> {
    match path {
        Some(p) => raster_file::write(p, grad),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct LossOut {
    loss: f64,
}

#[derive(Serialize)]
struct BoundaryLossOut {
    loss: f64,
    /// Pair counts per subset: fg-pos, fg-neg, bg-pos, cross-neg.
    pair_counts: [usize; 4],
}

#[derive(Serialize)]
struct PairsOut {
    height: usize,
    width: usize,
    offsets: usize,
    pairs: usize,
    pair_counts: [usize; 4],
}

#[derive(Serialize)]
struct GradOut {
    kernel: Kernel,
    fixture: bool,
    loss: f64,
    #[serde(flatten)]
    report: GradCheckReport,
}

pub struct RunContext {
    pub cfg: PipelineConfig,
    pub jobs: usize,
}

impl RunContext {
    fn exec(&self) -> Execution {
        if self.jobs > 1 {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let ctx = RunContext {
        cfg: cli.config.resolve()?,
        jobs: cli.jobs,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs)
        .build()
        .map_err(|e| CliError::Data(e.into()))?;
    pool.install(|| dispatch(&ctx, cli.command))
}

fn dispatch(ctx: &RunContext, command: Command) -> CliResult<()> {
    let cfg = &ctx.cfg;
    match command {
        Command::Heatmap {
            points: pts,
            height,
            width,
            out,
        } => {
            let set = points::read(&pts, Some((height, width)))?;
            let target = heatmap::gaussian_heatmap(&set, height, width, cfg.sigma, cfg.r1, cfg.r2)?;
            raster_file::write(&out, &target)?;
        }
        Command::DetLoss {
            pred,
            target,
            json,
            grad,
        } => {
            let pred = raster_file::read_f32(&pred)?;
            let target = raster_file::read_f32(&target)?;
            let out = heatmap::detection_loss(&pred, &target, cfg.w_fg, cfg.w_bg)?;
            write_grad(grad.as_deref(), &out.grad)?;
            emit_json(json.as_deref(), "det-loss", LossOut { loss: out.loss }, cfg)?;
        }
        Command::Peaks { pred, out } => {
            let pred = raster_file::read_f32(&pred)?;
            let peaks = heatmap::extract_peaks(&pred, cfg.peak_threshold, cfg.connectivity);
            points::write(out.as_deref(), &peaks.points)?;
        }
        Command::Curriculum {
            pred,
            existing,
            out,
            merged,
        } => {
            let pred = raster_file::read_f32(&pred)?;
            let existing = points::read(&existing, Some(pred.shape()))?;
            let peaks = heatmap::extract_peaks(&pred, cfg.peak_threshold, cfg.connectivity);
            let admitted = curriculum::curriculum_round(&peaks, &existing, cfg.k_neighbors, cfg.existing_radius());
            let result = if merged {
                let plain = PointSet::new(existing.points().to_vec()).expect("already unique");
                plain.merged(&admitted)
            } else {
                admitted
            };
            points::write(out.as_deref(), &result)?;
        }
        Command::Voronoi {
            points: pts,
            height,
            width,
            out,
        } => {
            let set = points::read(&pts, Some((height, width)))?;
            let mask = coarse::voronoi_labels(&set, height, width, cfg.fg_radius)?;
            raster_file::write(&out, &trimask::encode(&mask)?)?;
        }
        Command::Cluster {
            image,
            points: pts,
            out,
        } => {
            let img = png::read_rgb(&image)?;
            let set = points::read(&pts, Some(img.shape()))?;
            let mask = coarse::cluster_labels(&img, &set, cfg.dist_clip, cfg.kmeans_max_iters, cfg.seed)?;
            raster_file::write(&out, &trimask::encode(&mask)?)?;
        }
        Command::CeLoss { pred, mask, json, grad } => {
            let pred = raster_file::read_f32(&pred)?;
            let mask = read_trimask(&mask)?;
            let out = coarse::masked_cross_entropy(&pred, &mask, cfg.eps_log)?;
            write_grad(grad.as_deref(), &out.grad)?;
            emit_json(json.as_deref(), "ce-loss", LossOut { loss: out.loss }, cfg)?;
        }
        Command::AffinityPairs {
            coarse: path,
            out,
            json,
        } => {
            let prob = raster_file::read_f32(&path)?;
            let pairs = build_pairs(prob, cfg, ctx.exec())?;
            pairs_file::write(&out, &pairs)?;
            let (height, width) = pairs.shape();
            let summary = PairsOut {
                height,
                width,
                offsets: pairs.offsets().len(),
                pairs: pairs.len(),
                pair_counts: pairs.counts(),
            };
            emit_json(json.as_deref(), "affinity-pairs", summary, cfg)?;
        }
        Command::BoundaryLoss {
            boundary,
            pairs,
            json,
            grad,
        } => {
            let boundary = raster_file::read_f32(&boundary)?;
            let pairs = pairs_file::read(&pairs)?;
            let out = affinity::boundary_loss(&boundary, &pairs, cfg.eps_log, ctx.exec())?;
            write_grad(grad.as_deref(), &out.grad)?;
            let result = BoundaryLossOut {
                loss: out.loss,
                pair_counts: pairs.counts(),
            };
            emit_json(json.as_deref(), "boundary-loss", result, cfg)?;
        }
        Command::Gradcheck {
            kernel,
            pred,
            target,
            mask,
            boundary,
            pairs,
            size,
            step,
            json,
        } => {
            let inputs = GradInputs {
                pred,
                target,
                mask,
                boundary,
                pairs,
            };
            let out = gradcheck(ctx, kernel, inputs, size, step)?;
            emit_json(json.as_deref(), "gradcheck", out, cfg)?;
        }
        Command::Post {
            seg,
            boundary,
            out,
            list,
        } => match list {
            Some(list) => run_batch(&list, 3, |p| post_one(cfg, &p[0], &p[1], &p[2]))?,
            None => post_one(cfg, &seg.unwrap(), &boundary.unwrap(), &out.unwrap())?,
        },
        Command::Eval { pred, gt, json, list } => match list {
            Some(list) => run_batch(&list, 3, |p| eval_one(cfg, &p[0], &p[1], Some(&p[2])))?,
            None => eval_one(cfg, &pred.unwrap(), &gt.unwrap(), json.as_deref())?,
        },
        Command::EvalDet { pred, gt, json } => {
            let pred = points::read(&pred, None)?;
            let gt = points::read(&gt, None)?;
            let scores = metrics::detection_prf(&pred, &gt, cfg.match_radius);
            emit_json(json.as_deref(), "eval-det", scores, cfg)?;
        }
    }
    Ok(())
}

fn build_pairs(prob: RasterF32, cfg: &PipelineConfig, exec: Execution) -> CliResult<affinity::AffinityPairs> {
    let coarse = CoarseInstancePrediction::from_probability(prob, cfg.t_f, cfg.t_b, cfg.connectivity)?;
    let offsets = affinity::half_disk_offsets(cfg.gamma, cfg.offset_stride);
    Ok(affinity::build_affinity_pairs(&coarse, &offsets, exec)?)
}

fn post_one(cfg: &PipelineConfig, seg: &Path, boundary: &Path, out: &Path) -> CliResult<()> {
    let seg = raster_file::read_f32(seg)?;
    let boundary = raster_file::read_f32(boundary)?;
    let inst = postprocess::instance_postprocess(&seg, &boundary, cfg)?;
    write_instances(out, &inst)?;
    Ok(())
}

fn eval_one(cfg: &PipelineConfig, pred: &Path, gt: &Path, json: Option<&Path>) -> CliResult<()> {
    let pred = read_instances(pred)?;
    let gt = read_instances(gt)?;
    let scores = metrics::evaluate_segmentation(&pred, &gt)?;
    emit_json(json, "eval", scores, cfg)
}

/// Runs `job` over every line of a batch list on the current thread pool.
/// A failing line is reported and does not stop the others.
fn run_batch(list: &Path, arity: usize, job: impl Fn(&[PathBuf]) -> CliResult<()> + Sync) -> CliResult<()> {
    let entries = crate::read_list(list)?;
    if let Some((i, e)) = entries.iter().enumerate().find(|(_, e)| e.len() != arity) {
        return Err(CliError::Usage(format!(
            "{}: entry {} has {} paths, expected {arity}",
            list.display(),
            i + 1,
            e.len()
        )));
    }
    let results: Vec<CliResult<()>> = entries.par_iter().map(|e| job(e)).collect();
    let mut failed = 0;
    for (i, r) in results.into_iter().enumerate() {
        if let Err(e) = r {
            failed += 1;
            eprintln!("entry {}: {e:#}", i + 1);
        }
    }
    if failed > 0 {
        return Err(CliError::Data(anyhow!("{failed} of {} entries failed", entries.len())));
    }
    Ok(())
}

struct GradInputs {
    pred: Option<PathBuf>,
    target: Option<PathBuf>,
    mask: Option<PathBuf>,
    boundary: Option<PathBuf>,
    pairs: Option<PathBuf>,
}

impl GradInputs {
    fn any(&self) -> bool {
        self.pred.is_some()
            || self.target.is_some()
            || self.mask.is_some()
            || self.boundary.is_some()
            || self.pairs.is_some()
    }
}

fn both(a: Option<PathBuf>, b: Option<PathBuf>, names: &str) -> CliResult<(PathBuf, PathBuf)> {
    match (a, b) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(CliError::Usage(format!(
            "gradcheck needs both {names}, or neither for the random fixture"
        ))),
    }
}

fn uniform(h: usize, w: usize, lo: f32, hi: f32, rng: &mut ChaCha8Rng) -> RasterF32 {
    Raster::from_fn(h, w, |_, _| rng.gen_range(lo..hi))
}

fn random_points(h: usize, w: usize, n: usize, rng: &mut ChaCha8Rng) -> PointSet {
    let mut pts: Vec<Point> = Vec::new();
    while pts.len() < n.min(h * w) {
        let p = Point::new(rng.gen_range(0..h), rng.gen_range(0..w));
        if !pts.contains(&p) {
            pts.push(p);
        }
    }
    PointSet::new(pts).expect("unique by construction")
}

fn gradcheck(
    ctx: &RunContext,
    kernel: Kernel,
    inputs: GradInputs,
    size: usize,
    step: Option<f32>,
) -> CliResult<GradOut> {
    let cfg = &ctx.cfg;
    let fixture = !inputs.any();
    if fixture && size < 2 {
        return Err(CliError::Usage("--size must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (loss, report) = match kernel {
        Kernel::DetLoss => {
            let step = step.unwrap_or(1e-2);
            let (pred, target) = if fixture {
                let pts = random_points(size, size, 4, &mut rng);
                let target = heatmap::gaussian_heatmap(&pts, size, size, cfg.sigma, cfg.r1, cfg.r2)?;
                (uniform(size, size, 0.0, 1.0, &mut rng), target)
            } else {
                let (p, t) = both(inputs.pred, inputs.target, "--pred and --target")?;
                (raster_file::read_f32(&p)?, raster_file::read_f32(&t)?)
            };
            let out = heatmap::detection_loss(&pred, &target, cfg.w_fg, cfg.w_bg)?;
            let report = check_gradient(
                &pred,
                &out.grad,
                step,
                |_| true,
                |x| heatmap::detection_loss(x, &target, cfg.w_fg, cfg.w_bg).map(|o| o.loss),
            )?;
            (out.loss, report)
        }
        Kernel::CeLoss => {
            let step = step.unwrap_or(1e-3);
            let (pred, mask) = if fixture {
                let pts = random_points(size, size, 4, &mut rng);
                let mask = coarse::voronoi_labels(&pts, size, size, cfg.fg_radius)?;
                (uniform(size, size, 0.05, 0.95, &mut rng), mask)
            } else {
                let (p, m) = both(inputs.pred, inputs.mask, "--pred and --mask")?;
                (raster_file::read_f32(&p)?, read_trimask(&m)?)
            };
            let out = coarse::masked_cross_entropy(&pred, &mask, cfg.eps_log)?;
            // The clamp makes the loss flat near 0 and 1.
            let margin = cfg.eps_log as f32 + 2.0 * step;
            let report = check_gradient(
                &pred,
                &out.grad,
                step,
                |i| pred[i] > margin && pred[i] < 1.0 - margin,
                |x| coarse::masked_cross_entropy(x, &mask, cfg.eps_log).map(|o| o.loss),
            )?;
            (out.loss, report)
        }
        Kernel::BoundaryLoss => {
            let step = step.unwrap_or(1e-3);
            let (boundary, pairs) = if fixture {
                let prob = uniform(size, size, 0.0, 1.0, &mut rng);
                let pairs = build_pairs(prob, cfg, ctx.exec())?;
                (uniform(size, size, 0.1, 0.9, &mut rng), pairs)
            } else {
                let (b, p) = both(inputs.boundary, inputs.pairs, "--boundary and --pairs")?;
                (raster_file::read_f32(&b)?, pairs_file::read(&p)?)
            };
            let exec = ctx.exec();
            let out = affinity::boundary_loss(&boundary, &pairs, cfg.eps_log, exec)?;
            // Pixels tied for a path maximum within the step have a kink.
            let ties = affinity::boundary_tie_mask(&boundary, &pairs, 2.0 * step)?;
            let report = check_gradient(
                &boundary,
                &out.grad,
                step,
                |i| !ties[i],
                |x| affinity::boundary_loss(x, &pairs, cfg.eps_log, exec).map(|o| o.loss),
            )?;
            (out.loss, report)
        }
    };
    Ok(GradOut {
        kernel,
        fixture,
        loss,
        report,
    })
}
