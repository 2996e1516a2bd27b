//! Synthetic ground truth for validating both estimators.
//!
//! Truth is defined at the discrete-symbol level: a joint table over symbol
//! pairs gives closed-form mutual information, and symbols are embedded as
//! well-separated centroids plus near-noiseless Gaussian jitter. Because the
//! estimators are classification-based, the data-processing inequality makes
//! the symbol-level MI the correct ceiling, and the separability constraint
//! makes the gap negligible by construction.
//!
//! Gaussian noise comes from a counter-based 64-bit generator (splitmix64's
//! finalizer evaluated at arbitrary indices) through the Box–Muller
//! transform, with one counter block per (frame, dimension): results are
//! deterministic per seed and independent of evaluation order.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::datamodel::{
    self, DatasetManifest, FeatureEntry, FeatureMatrix, FrameLabels, SplitTag, UtteranceRecord,
    ViewTag,
};
use crate::error::{Error, Result};
use crate::mi::{LabeledFrames, PairedViews};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(key: u64, counter: u64) -> u64 {
    let mut z = key.wrapping_add(counter.wrapping_mul(GOLDEN));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based generator: every draw is addressed by an explicit index, so
/// streams can be evaluated in any order (or in parallel) with identical
/// results.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { key: seed }
    }

    /// Independent substream for a labeled purpose (labels, per-view noise…).
    pub fn substream(&self, label: u64) -> Self {
        CounterRng {
            key: mix64(self.key, label ^ 0xD6E8_FEB8_6659_FD93),
        }
    }

    pub fn u64_at(&self, index: u64) -> u64 {
        mix64(self.key, index)
    }

    /// Uniform draw in [0, 1) with 53 random bits.
    pub fn uniform_at(&self, index: u64) -> f64 {
        (self.u64_at(index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard-normal pair via Box–Muller; consumes counters 2i and 2i+1.
    pub fn gaussian_pair_at(&self, index: u64) -> (f64, f64) {
        // u1 in (0, 1] so the log is finite.
        let u1 = ((self.u64_at(2 * index) >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform_at(2 * index + 1);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }
}

/// A joint distribution over (row symbol, column symbol): nonnegative
/// entries summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    probs: Array2<f64>,
}

impl JointTable {
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        let (r, c) = probs.dim();
        if r == 0 || c == 0 {
            return Err(Error::invalid_config("joint table must be at least 1×1"));
        }
        for &p in probs.iter() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::invalid_config(format!(
                    "joint table entries must be finite and ≥ 0, got {p}"
                )));
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid_config(format!(
                "joint table must sum to 1 within 1e-9, got {total}"
            )));
        }
        Ok(JointTable { probs })
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn rows(&self) -> usize {
        self.probs.nrows()
    }

    pub fn cols(&self) -> usize {
        self.probs.ncols()
    }

    pub fn row_marginal(&self) -> Array1<f64> {
        self.probs.sum_axis(ndarray::Axis(1))
    }

    pub fn col_marginal(&self) -> Array1<f64> {
        self.probs.sum_axis(ndarray::Axis(0))
    }

    pub fn transposed(&self) -> JointTable {
        JointTable {
            probs: self.probs.t().to_owned(),
        }
    }
}

/// Exact mutual information of a joint table in bits:
/// `Σ p(r,c)·log₂(p(r,c)/(p(r)·p(c)))` with `0·log` terms dropped.
pub fn exact_mi_bits(joint: &JointTable) -> f64 {
    let pr = joint.row_marginal();
    let pc = joint.col_marginal();
    let mut mi = 0.0;
    for ((r, c), &p) in joint.probs.indexed_iter() {
        if p > 0.0 {
            mi += p * (p / (pr[r] * pc[c])).log2();
        }
    }
    mi
}

/// Uniform-source symmetric channel: with probability `fidelity` the output
/// symbol equals the input, otherwise it is uniform over all symbols. Its
/// exact MI is strictly increasing in `fidelity`.
pub fn mixture_channel(num_symbols: usize, fidelity: f64) -> Result<JointTable> {
    if num_symbols < 2 {
        return Err(Error::invalid_config("mixture channel needs ≥ 2 symbols"));
    }
    if !(0.0..=1.0).contains(&fidelity) {
        return Err(Error::invalid_config(format!(
            "fidelity must lie in [0, 1], got {fidelity}"
        )));
    }
    let s = num_symbols as f64;
    let probs = Array2::from_shape_fn((num_symbols, num_symbols), |(r, c)| {
        let hit = if r == c { fidelity } else { 0.0 };
        (hit + (1.0 - fidelity) / s) / s
    });
    JointTable::new(probs)
}

/// Embedding of discrete symbols as pairwise-distinct centroids plus
/// isotropic Gaussian noise of scale `noise_sigma`.
#[derive(Debug, Clone)]
pub struct EmbeddingSpec {
    symbol_centroids: Array2<f64>,
    noise_sigma: f64,
}

impl EmbeddingSpec {
    pub fn new(symbol_centroids: Array2<f64>, noise_sigma: f64) -> Result<Self> {
        let (s, d) = symbol_centroids.dim();
        if s == 0 || d == 0 {
            return Err(Error::invalid_config("embedding needs ≥ 1 symbol and ≥ 1 dim"));
        }
        if !noise_sigma.is_finite() || noise_sigma < 0.0 {
            return Err(Error::invalid_config("noise_sigma must be finite and ≥ 0"));
        }
        if symbol_centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_config("centroids must be finite"));
        }
        let spec = EmbeddingSpec {
            symbol_centroids,
            noise_sigma,
        };
        if s > 1 && spec.min_pairwise_distance() == 0.0 {
            return Err(Error::invalid_config("centroids must be pairwise distinct"));
        }
        Ok(spec)
    }

    /// Constructor for the separable regime: noise small enough
    /// (`σ ≤ min_pairwise_distance/10`) that symbols stay recoverable.
    pub fn separable(symbol_centroids: Array2<f64>, noise_sigma: f64) -> Result<Self> {
        let spec = Self::new(symbol_centroids, noise_sigma)?;
        let limit = spec.min_pairwise_distance() / 10.0;
        if spec.noise_sigma > limit {
            return Err(Error::invalid_config(format!(
                "not separable: noise_sigma {} exceeds min_pairwise_distance/10 = {limit}",
                spec.noise_sigma
            )));
        }
        Ok(spec)
    }

    /// Separable one-hot embedding: symbol `s` ↦ `scale·e_s` in `R^S`.
    pub fn one_hot(num_symbols: usize, scale: f64, noise_sigma: f64) -> Result<Self> {
        let centroids = Array2::from_shape_fn((num_symbols, num_symbols), |(r, c)| {
            if r == c {
                scale
            } else {
                0.0
            }
        });
        Self::separable(centroids, noise_sigma)
    }

    pub fn num_symbols(&self) -> usize {
        self.symbol_centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.symbol_centroids.ncols()
    }

    pub fn centroids(&self) -> &Array2<f64> {
        &self.symbol_centroids
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let s = self.num_symbols();
        let mut min = f64::INFINITY;
        for i in 0..s {
            for j in (i + 1)..s {
                let d2: f64 = self
                    .symbol_centroids
                    .row(i)
                    .iter()
                    .zip(self.symbol_centroids.row(j).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                min = min.min(d2.sqrt());
            }
        }
        if min.is_finite() {
            min
        } else {
            0.0
        }
    }

    /// Embed a symbol sequence: row `i` = centroid of `symbols[i]` plus
    /// `σ`-scaled noise from the given substream. The noise counter for
    /// row `i`, column `j` is `i·dim + j`, so embeddings are independent
    /// of chunking or thread schedule.
    pub fn embed(&self, symbols: &[u32], noise: &CounterRng) -> FeatureMatrix {
        let d = self.dim();
        let mut values = vec![0.0f32; symbols.len() * d];
        values
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(i, row)| {
                let centroid = self.symbol_centroids.row(symbols[i] as usize);
                for (j, out) in row.iter_mut().enumerate() {
                    let (g, _) = noise.gaussian_pair_at((i * d + j) as u64);
                    *out = (centroid[j] + self.noise_sigma * g) as f32;
                }
            });
        let array = Array2::from_shape_vec((symbols.len(), d), values).expect("length matches");
        FeatureMatrix::new(array).expect("finite centroids and noise produce finite features")
    }
}

/// Cumulative distribution over the flattened joint, for indexed sampling.
struct FlatCdf {
    cum: Vec<f64>,
    cols: usize,
}

impl FlatCdf {
    fn new(joint: &JointTable) -> Self {
        let mut cum = Vec::with_capacity(joint.rows() * joint.cols());
        let mut total = 0.0;
        for &p in joint.probs.iter() {
            total += p;
            cum.push(total);
        }
        FlatCdf {
            cum,
            cols: joint.cols(),
        }
    }

    fn draw(&self, u: f64) -> (u32, u32) {
        let idx = self
            .cum
            .partition_point(|&c| c <= u)
            .min(self.cum.len() - 1);
        ((idx / self.cols) as u32, (idx % self.cols) as u32)
    }
}

/// Labeled synthetic frames plus the exact MI of the (label, symbol) pair.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub frames: LabeledFrames,
    pub exact_mi_bits: f64,
}

/// Draw `(y, c)` i.i.d. from the joint (rows = labels, columns = embedded
/// channel symbols); each feature row embeds its column symbol. As σ→0 the
/// recoverable I(Z;Y) approaches the table's exact MI.
pub fn sample_labeled(
    joint: &JointTable,
    embed: &EmbeddingSpec,
    n_frames: usize,
    seed: u64,
) -> Result<LabeledSample> {
    if n_frames == 0 {
        return Err(Error::insufficient("n_frames must be ≥ 1"));
    }
    if embed.num_symbols() != joint.cols() {
        return Err(Error::dim_mismatch(format!(
            "embedding has {} symbols but joint table has {} columns",
            embed.num_symbols(),
            joint.cols()
        )));
    }
    let rng = CounterRng::new(seed);
    let pair_rng = rng.substream(0);
    let noise_rng = rng.substream(1);
    let cdf = FlatCdf::new(joint);
    let mut labels = Vec::with_capacity(n_frames);
    let mut symbols = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let (y, c) = cdf.draw(pair_rng.uniform_at(i as u64));
        labels.push(y);
        symbols.push(c);
    }
    let features = embed.embed(&symbols, &noise_rng);
    let labels = FrameLabels::new(labels, joint.rows())?;
    Ok(LabeledSample {
        frames: LabeledFrames::new(features, labels)?,
        exact_mi_bits: exact_mi_bits(joint),
    })
}

/// Frame-aligned synthetic view pair plus the exact MI of the underlying
/// symbol pair (the validation target for the unsupervised bound with
/// k = number of B symbols).
#[derive(Debug, Clone)]
pub struct ViewPairSample {
    pub views: PairedViews,
    pub exact_mi_bits: f64,
}

/// Draw `(a, b)` i.i.d. from the joint (rows = A symbols, columns = B
/// symbols) and embed each side with its own spec and independent noise.
pub fn sample_view_pair(
    joint: &JointTable,
    embed_a: &EmbeddingSpec,
    embed_b: &EmbeddingSpec,
    n_frames: usize,
    seed: u64,
) -> Result<ViewPairSample> {
    if n_frames == 0 {
        return Err(Error::insufficient("n_frames must be ≥ 1"));
    }
    if embed_a.num_symbols() != joint.rows() {
        return Err(Error::dim_mismatch(format!(
            "A-embedding has {} symbols but joint table has {} rows",
            embed_a.num_symbols(),
            joint.rows()
        )));
    }
    if embed_b.num_symbols() != joint.cols() {
        return Err(Error::dim_mismatch(format!(
            "B-embedding has {} symbols but joint table has {} columns",
            embed_b.num_symbols(),
            joint.cols()
        )));
    }
    let rng = CounterRng::new(seed);
    let pair_rng = rng.substream(0);
    let noise_a = rng.substream(1);
    let noise_b = rng.substream(2);
    let cdf = FlatCdf::new(joint);
    let mut sym_a = Vec::with_capacity(n_frames);
    let mut sym_b = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let (a, b) = cdf.draw(pair_rng.uniform_at(i as u64));
        sym_a.push(a);
        sym_b.push(b);
    }
    let za = embed_a.embed(&sym_a, &noise_a);
    let zb = embed_b.embed(&sym_b, &noise_b);
    Ok(ViewPairSample {
        views: PairedViews::new(za, zb)?,
        exact_mi_bits: exact_mi_bits(joint),
    })
}

/// How synthetic exports are chopped into utterances.
#[derive(Debug, Clone, Copy)]
pub struct ExportLayout {
    pub frames_per_utterance: usize,
}

impl Default for ExportLayout {
    fn default() -> Self {
        ExportLayout {
            frames_per_utterance: 1000,
        }
    }
}

fn utt_ranges(n: usize, per_utt: usize) -> Vec<(usize, usize)> {
    let mut ranges = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + per_utt).min(n);
        ranges.push((start, end));
        start = end;
    }
    ranges
}

fn slice_matrix(m: &FeatureMatrix, start: usize, end: usize) -> FeatureMatrix {
    let view = m.values().slice(ndarray::s![start..end, ..]).to_owned();
    FeatureMatrix::new(view).expect("slice of a valid matrix is valid")
}

/// Export a labeled sample pair (fit + eval) as FMAT/label files with a
/// manifest, so the CLI path exercises the same data as the library path.
/// Returns the manifest path.
pub fn export_labeled_dataset(
    fit: &LabeledFrames,
    eval: &LabeledFrames,
    layout: ExportLayout,
    dir: &Path,
) -> Result<PathBuf> {
    if layout.frames_per_utterance == 0 {
        return Err(Error::invalid_config("frames_per_utterance must be ≥ 1"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::new();
    for (split, data) in [(SplitTag::Fit, fit), (SplitTag::Eval, eval)] {
        for (u, (start, end)) in utt_ranges(data.features().frames(), layout.frames_per_utterance)
            .into_iter()
            .enumerate()
        {
            let utt_id = format!("{split}_{u:04}");
            let feat_name = format!("{utt_id}.fmat");
            let label_name = format!("{utt_id}.labels");
            store_feature_matrix_slice(data.features(), start, end, &dir.join(&feat_name))?;
            let labels = FrameLabels::new(
                data.labels().ids()[start..end].to_vec(),
                data.labels().num_classes(),
            )?;
            datamodel::store_labels(&labels, dir.join(&label_name))?;
            records.push(UtteranceRecord {
                utt_id,
                split,
                frame_period_ms: 20.0,
                label_path: Some(PathBuf::from(label_name)),
                features: vec![FeatureEntry {
                    layer: 0,
                    view: ViewTag::Plain,
                    path: PathBuf::from(feat_name),
                }],
            });
        }
    }
    let manifest_path = dir.join("manifest.json");
    datamodel::store_manifest(&DatasetManifest { records }, &manifest_path)?;
    Ok(manifest_path)
}

/// Export a view-pair sample (fit + eval) as masked/unmasked FMAT dumps with
/// a manifest: view A rows become the masked-pass dump, view B rows the
/// unmasked-pass dump, so mask-mode pairing at all positions reproduces the
/// row alignment. Returns the manifest path.
pub fn export_view_pair_dataset(
    fit: &PairedViews,
    eval: &PairedViews,
    layout: ExportLayout,
    dir: &Path,
) -> Result<PathBuf> {
    if layout.frames_per_utterance == 0 {
        return Err(Error::invalid_config("frames_per_utterance must be ≥ 1"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::new();
    for (split, data) in [(SplitTag::Fit, fit), (SplitTag::Eval, eval)] {
        for (u, (start, end)) in utt_ranges(data.za().frames(), layout.frames_per_utterance)
            .into_iter()
            .enumerate()
        {
            let utt_id = format!("{split}_{u:04}");
            let a_name = format!("{utt_id}.masked.fmat");
            let b_name = format!("{utt_id}.unmasked.fmat");
            store_feature_matrix_slice(data.za(), start, end, &dir.join(&a_name))?;
            store_feature_matrix_slice(data.zb(), start, end, &dir.join(&b_name))?;
            records.push(UtteranceRecord {
                utt_id,
                split,
                frame_period_ms: 20.0,
                label_path: None,
                features: vec![
                    FeatureEntry {
                        layer: 0,
                        view: ViewTag::Masked,
                        path: PathBuf::from(a_name),
                    },
                    FeatureEntry {
                        layer: 0,
                        view: ViewTag::Unmasked,
                        path: PathBuf::from(b_name),
                    },
                ],
            });
        }
    }
    let manifest_path = dir.join("manifest.json");
    datamodel::store_manifest(&DatasetManifest { records }, &manifest_path)?;
    Ok(manifest_path)
}

fn store_feature_matrix_slice(
    m: &FeatureMatrix,
    start: usize,
    end: usize,
    path: &Path,
) -> Result<()> {
    datamodel::store_feature_matrix(&slice_matrix(m, start, end), path)
}
