use nucseg_core::affinity::{
    boundary_loss, build_affinity_pairs, fine_boundary_grad, half_disk_offsets, total_fine_loss,
    CoarseInstancePrediction, Execution,
};
use nucseg_core::coarse::{cluster_labels, masked_cross_entropy, voronoi_labels, RgbImage};
use nucseg_core::curriculum::curriculum_round;
use nucseg_core::gradcheck::check_gradient;
use nucseg_core::heatmap::{extract_peaks, gaussian_heatmap};
use nucseg_core::metrics::{detection_prf, evaluate_segmentation};
use nucseg_core::postprocess::instance_postprocess;
use nucseg_core::{PipelineConfig, Point, PointSet, Raster, RasterF32, Tri};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CENTERS: [(usize, usize); 6] = [(12, 12), (12, 44), (30, 28), (48, 10), (50, 50), (30, 56)];
const RADIUS: i64 = 6;

fn in_disk(r: usize, c: usize, (cr, cc): (usize, usize)) -> bool {
    (r as i64 - cr as i64).pow(2) + (c as i64 - cc as i64).pow(2) <= RADIUS * RADIUS
}

fn scene() -> (RgbImage, Raster<u32>) {
    let gt = Raster::from_fn(64, 68, |r, c| {
        CENTERS
            .iter()
            .position(|&p| in_disk(r, c, p))
            .map_or(0, |i| i as u32 + 1)
    });
    let img = gt.map(|&id| if id > 0 { [90, 40, 150] } else { [235, 215, 225] });
    (img, gt)
}

fn all_points() -> PointSet {
    PointSet::new(CENTERS.iter().map(|&p| Point::from(p)).collect()).unwrap()
}

#[test]
fn detection_round_with_partial_labels() {
    let cfg = PipelineConfig::default();
    let full = all_points();
    let target = gaussian_heatmap(&full, 64, 68, cfg.sigma, cfg.r1, cfg.r2).unwrap();
    // A perfect detector: its output is the clipped target.
    let pred = target.map(|&v| v.max(0.0));
    let peaks = extract_peaks(&pred, cfg.peak_threshold, cfg.connectivity);
    assert_eq!(detection_prf(&peaks.points, &full, cfg.match_radius).f1, 1.0);

    let partial = PointSet::new(full.points()[..2].to_vec()).unwrap();
    let admitted = curriculum_round(&peaks, &partial, cfg.k_neighbors, cfg.existing_radius());
    // floor(4 * exp(-2 / 4)) = 2 of the 4 unlabelled nuclei.
    assert_eq!(admitted.len(), 2);
    let merged = partial.merged(&admitted);
    assert_eq!(merged.len(), 4);
    assert!(merged.iter().all(|p| full.points().contains(p)));
}

#[test]
fn coarse_labels_agree_with_the_scene() {
    let cfg = PipelineConfig::default();
    let (img, gt) = scene();
    let pts = all_points();
    let vor = voronoi_labels(&pts, 64, 68, cfg.fg_radius).unwrap();
    let clu = cluster_labels(&img, &pts, cfg.dist_clip, cfg.kmeans_max_iters, cfg.seed).unwrap();
    for (i, (&v, &k)) in vor.iter().zip(clu.iter()).enumerate() {
        if let Tri::Foreground(id) = v {
            assert_eq!(gt[i], id, "voronoi foreground off-nucleus at {i}");
        }
        match k {
            Tri::Foreground(id) => assert_eq!(gt[i], id, "cluster foreground mislabelled at {i}"),
            Tri::Background => assert_eq!(gt[i], 0, "cluster background inside a nucleus at {i}"),
            Tri::Ignore => {}
        }
    }
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let cfg = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts = all_points();
    let mask = voronoi_labels(&pts, 64, 68, cfg.fg_radius).unwrap();
    let pred: RasterF32 = Raster::from_fn(64, 68, |_, _| rng.gen_range(0.05..0.95));
    let out = masked_cross_entropy(&pred, &mask, cfg.eps_log).unwrap();
    let rep = check_gradient(
        &pred,
        &out.grad,
        1e-3,
        |_| true,
        |x| masked_cross_entropy(x, &mask, cfg.eps_log).map(|o| o.loss),
    )
    .unwrap();
    assert!(rep.max_rel_error < 1e-3, "{rep:?}");
}

#[test]
fn ideal_maps_segment_and_score_perfectly() {
    let cfg = PipelineConfig::default();
    let (_, gt) = scene();
    let seg = gt.map(|&id| if id > 0 { 1.0f32 } else { 0.0 });
    let boundary = Raster::from_fn(64, 68, |r, c| {
        let id = gt.get(r, c);
        let edge = id > 0
            && [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)].iter().any(|&(dr, dc)| {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                !gt.contains(rr as isize, cc as isize) || gt.get(rr as usize, cc as usize) != id
            });
        if edge {
            1.0f32
        } else {
            0.0
        }
    });
    let inst = instance_postprocess(&seg, &boundary, &cfg).unwrap();
    let s = evaluate_segmentation(&inst, &gt).unwrap();
    assert_eq!((s.aji, s.pq), (1.0, 1.0));

    let coarse = CoarseInstancePrediction::from_probability(
        seg.map(|&v| if v > 0.0 { 0.9 } else { 0.01 }),
        cfg.t_f,
        cfg.t_b,
        cfg.connectivity,
    )
    .unwrap();
    let pairs = build_affinity_pairs(&coarse, &half_disk_offsets(cfg.gamma, 1), Execution::Parallel).unwrap();
    let soft = boundary.map(|&v| 0.05 + 0.9 * v);
    let flat = Raster::filled(64, 68, 0.5f32);
    let good = boundary_loss(&soft, &pairs, cfg.eps_log, Execution::Parallel).unwrap();
    let bad = boundary_loss(&flat, &pairs, cfg.eps_log, Execution::Parallel).unwrap();
    assert!(good.loss < bad.loss, "{} vs {}", good.loss, bad.loss);

    let total = total_fine_loss(0.3, 0.2, good.loss, cfg.beta);
    assert!((total - (0.5 + cfg.beta * good.loss)).abs() < 1e-12);
    let g = fine_boundary_grad(&good, cfg.beta);
    assert!(g
        .iter()
        .zip(good.grad.iter())
        .all(|(a, b)| *a == (cfg.beta * *b as f64) as f32));
}
