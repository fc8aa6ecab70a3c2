//! Lloyd's k-means with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    /// Cluster index in `0..k` for every sample.
    pub assignments: Vec<usize>,
    /// `k` centroids of dimension `dim`.
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: f64,
    /// Inertia after the seeding assignment and after every iteration.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Clusters `samples` (row-major, `dim` values per sample) into `k` groups.
///
/// Deterministic for a given seed. Empty clusters keep their previous
/// centroid. Stops after `max_iters` updates or when no assignment changes.
pub fn kmeans(samples: &[f64], dim: usize, k: usize, max_iters: usize, seed: u64) -> Result<KMeansResult> {
    if dim == 0 || !samples.len().is_multiple_of(dim) {
        return Err(Error::InvalidRaster(format!(
            "{} values do not form {dim}-dimensional samples",
            samples.len()
        )));
    }
    let n = samples.len() / dim;
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    if k > n {
        return Err(Error::TooFewSamples { k, samples: n });
    }
    let sample = |i: usize| &samples[i * dim..(i + 1) * dim];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(sample(rng.gen_range(0..n)).to_vec());
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(sample(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` just past the running sum.
            chosen.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("total > 0"))
        } else {
            rng.gen_range(0..n)
        };
        let c = sample(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(sample(i), &c));
        }
        centroids.push(c);
    }

    let assign = |centroids: &[Vec<f64>], assignments: &mut [usize]| -> (f64, bool) {
        let mut inertia = 0.0;
        let mut changed = false;
        for (i, slot) in assignments.iter_mut().enumerate() {
            let s = sample(i);
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(j, c)| (j, sq_dist(s, c)))
                .fold((0, f64::INFINITY), |acc, (j, d)| if d < acc.1 { (j, d) } else { acc });
            if *slot != best {
                *slot = best;
                changed = true;
            }
            inertia += d;
        }
        (inertia, changed)
    };

    let mut assignments = vec![usize::MAX; n];
    let (mut inertia, _) = assign(&centroids, &mut assignments);
    let mut history = vec![inertia];
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (acc, v) in sums[a].iter_mut().zip(sample(i)) {
                *acc += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                centroids[j] = sums[j].iter().map(|s| s * inv).collect();
            }
        }
        let (new_inertia, changed) = assign(&centroids, &mut assignments);
        inertia = new_inertia;
        history.push(inertia);
        if !changed {
            break;
        }
    }

    Ok(KMeansResult {
        assignments,
        centroids,
        inertia,
        inertia_history: history,
        iterations,
    })
}
