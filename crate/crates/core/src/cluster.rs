//! Lloyd's k-means with k-means++ initialization: the quantizer that turns a
//! continuous representation stream into cluster ids whose entropy is
//! estimable.
//!
//! Everything is deterministic per seed: initialization draws come from a
//! seeded generator, assignment ties break toward the lowest centroid index,
//! and reductions run in a fixed order, so refitting with the same inputs
//! reproduces centroids bit-for-bit regardless of thread count.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datamodel::{self, FeatureMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 50;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_RESTARTS: usize = 10;

/// A fitted quantizer: `k` centroids plus the fit trace (final inertia,
/// iteration count, per-iteration inertia history).
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    centroids: Array2<f64>,
    k: usize,
    inertia: f64,
    iterations_run: usize,
    seed: u64,
    inertia_history: Vec<f64>,
}

impl KMeansModel {
    pub fn centroids(&self) -> &Array2<f64> {
        &self.centroids
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    /// Final sum of squared distances from each point to its centroid.
    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    /// Number of Lloyd update iterations executed (0 = init only).
    pub fn iterations_run(&self) -> usize {
        self.iterations_run
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Inertia after initialization and after every update iteration;
    /// nonincreasing within floating tolerance.
    pub fn inertia_history(&self) -> &[f64] {
        &self.inertia_history
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Nearest centroid of `point`, with ties broken toward the lowest index.
fn nearest(point: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

fn assign_all(data: ArrayView2<f64>, centroids: &Array2<f64>) -> (Vec<u32>, f64) {
    let mut ids = vec![0u32; data.nrows()];
    let mut dists = vec![0f64; data.nrows()];
    // Per-row results are independent; the inertia sum below runs in row
    // order so the reduction is deterministic under any parallelism.
    ids.par_iter_mut()
        .zip(dists.par_iter_mut())
        .enumerate()
        .for_each(|(i, (id, dist))| {
            let (c, d) = nearest(data.row(i), centroids);
            *id = c as u32;
            *dist = d;
        });
    let inertia = dists.iter().sum();
    (ids, inertia)
}

/// k-means++ seeding: first centroid uniform, each further centroid drawn
/// with probability proportional to squared distance from the chosen set.
fn init_pp(data: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = data.nrows();
    let d = data.ncols();
    let mut centroids = Array2::zeros((k, d));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&data.row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(data.row(i), centroids.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // All points coincide with chosen centroids; any point works.
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&data.row(pick));
        for (i, w) in d2.iter_mut().enumerate() {
            let nd = sq_dist(data.row(i), centroids.row(c));
            if nd < *w {
                *w = nd;
            }
        }
    }
    centroids
}

/// Recompute centroids as cluster means. Clusters that lost every member are
/// re-seeded with the point farthest from its nearest centroid, keeping k
/// constant; since an empty centroid has no members, the repair never raises
/// the cost of the current assignment.
fn update_centroids(
    data: ArrayView2<f64>,
    assignments: &[u32],
    k: usize,
    centroids: &mut Array2<f64>,
) {
    let d = data.ncols();
    let mut sums = Array2::<f64>::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        let mut row = sums.row_mut(a as usize);
        row += &data.row(i);
        counts[a as usize] += 1;
    }
    let mut empty = Vec::new();
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            empty.push(c);
        } else {
            let mut row = centroids.row_mut(c);
            row.assign(&sums.row(c));
            row /= count as f64;
        }
    }
    if empty.is_empty() {
        return;
    }
    let mut d2: Vec<f64> = (0..data.nrows())
        .map(|i| nearest(data.row(i), centroids).1)
        .collect();
    for c in empty {
        let farthest = d2
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        centroids.row_mut(c).assign(&data.row(farthest));
        // Don't hand the same point to a second empty cluster.
        d2[farthest] = 0.0;
    }
}

/// Fit k-means on `data` (N×D): k-means++ init seeded by `seed`, then Lloyd
/// iterations until assignments stop changing or `max_iter` is reached.
pub fn fit_kmeans(data: ArrayView2<f64>, k: usize, max_iter: usize, seed: u64) -> Result<KMeansModel> {
    if k == 0 {
        return Err(Error::invalid_config("k must be ≥ 1"));
    }
    let n = data.nrows();
    if n < k {
        return Err(Error::insufficient(format!(
            "k-means needs at least k={k} points, got {n}"
        )));
    }
    if data.ncols() == 0 {
        return Err(Error::invalid_config("data must have ≥ 1 dimension"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = init_pp(data, k, &mut rng);
    let (mut assignments, mut inertia) = assign_all(data, &centroids);
    let mut history = vec![inertia];
    let mut iterations_run = 0;
    for _ in 0..max_iter {
        update_centroids(data, &assignments, k, &mut centroids);
        let (next, next_inertia) = assign_all(data, &centroids);
        iterations_run += 1;
        inertia = next_inertia;
        history.push(inertia);
        let converged = next == assignments;
        assignments = next;
        if converged {
            break;
        }
    }
    Ok(KMeansModel {
        centroids,
        k,
        inertia,
        iterations_run,
        seed,
        inertia_history: history,
    })
}

/// One SplitMix64 step decorrelates restart streams from adjacent seeds.
fn restart_seed(seed: u64, restart: u64) -> u64 {
    let mut z = seed ^ restart.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Best of `restarts` independent fits, judged by final inertia (earliest
/// restart wins ties). A single k-means++ init can still land in a poor
/// local optimum, especially at small k; restarting makes the quantizer's
/// quality stable across seeds.
pub fn fit_kmeans_restarts(
    data: ArrayView2<f64>,
    k: usize,
    max_iter: usize,
    seed: u64,
    restarts: usize,
) -> Result<KMeansModel> {
    if restarts == 0 {
        return Err(Error::invalid_config("restarts must be ≥ 1"));
    }
    let mut best: Option<KMeansModel> = None;
    for r in 0..restarts {
        let model = fit_kmeans(data, k, max_iter, restart_seed(seed, r as u64))?;
        if best.as_ref().is_none_or(|b| model.inertia < b.inertia) {
            best = Some(model);
        }
    }
    Ok(best.expect("restarts ≥ 1"))
}

/// Map each feature row to its nearest centroid (squared Euclidean, ties to
/// the lowest centroid index).
pub fn assign(model: &KMeansModel, features: ArrayView2<f64>) -> Result<Vec<u32>> {
    if features.ncols() != model.dim() {
        return Err(Error::dim_mismatch(format!(
            "features have dim {} but centroids have dim {}",
            features.ncols(),
            model.dim()
        )));
    }
    Ok(assign_all(features, &model.centroids).0)
}

/// Persist a model: centroids as an FMAT file (f32) plus a text sidecar
/// `k=<k> seed=<s> inertia=<v>`. The fit trace is not persisted; a loaded
/// model is a quantizer only.
pub fn store_kmeans(model: &KMeansModel, centroid_path: &Path, sidecar_path: &Path) -> Result<()> {
    let centroids32 = FeatureMatrix::new(model.centroids.mapv(|v| v as f32))?;
    datamodel::store_feature_matrix(&centroids32, centroid_path)?;
    // `{:?}` on f64 prints a round-trippable decimal form.
    let text = format!("k={} seed={} inertia={:?}\n", model.k, model.seed, model.inertia);
    fs::write(sidecar_path, text).map_err(|e| Error::io(sidecar_path, e))
}

/// Load a model persisted by [`store_kmeans`].
pub fn load_kmeans(centroid_path: &Path, sidecar_path: &Path) -> Result<KMeansModel> {
    let centroids = datamodel::load_feature_matrix(centroid_path)?
        .into_values()
        .mapv(f64::from);
    let text = fs::read_to_string(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
    let mut k = None;
    let mut seed = None;
    let mut inertia = None;
    for field in text.split_whitespace() {
        match field.split_once('=') {
            Some(("k", v)) => k = v.parse::<usize>().ok(),
            Some(("seed", v)) => seed = v.parse::<u64>().ok(),
            Some(("inertia", v)) => inertia = v.parse::<f64>().ok(),
            _ => {}
        }
    }
    let (k, seed, inertia) = match (k, seed, inertia) {
        (Some(k), Some(s), Some(i)) => (k, s, i),
        _ => {
            return Err(Error::Parse {
                path: sidecar_path.to_path_buf(),
                line: 1,
                detail: "sidecar must contain k=, seed=, and inertia= fields".into(),
            })
        }
    };
    if centroids.nrows() != k {
        return Err(Error::dim_mismatch(format!(
            "sidecar declares k={k} but centroid file has {} rows",
            centroids.nrows()
        )));
    }
    Ok(KMeansModel {
        centroids,
        k,
        inertia,
        iterations_run: 0,
        seed,
        inertia_history: Vec::new(),
    })
}
