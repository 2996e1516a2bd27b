//! On-disk and in-memory data model: feature matrices, frame labels, and
//! dataset manifests.
//!
//! Features live in a small binary container (`FMAT`) so that round-trips are
//! bit-exact and writable from any language: a 16-byte header (magic `FMAT`,
//! version byte, 3 zero bytes, then `T` and `D` as little-endian u32) followed
//! by `T·D` little-endian f32 values in row-major order. Labels are text with
//! an explicit `num_classes=<K>` header line so the class-support size is
//! recorded even when some classes are absent from a file.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FMAT_MAGIC: [u8; 4] = *b"FMAT";
pub const FMAT_VERSION: u8 = 1;
pub const FMAT_HEADER_LEN: usize = 16;

/// A `T×D` matrix of frame-level representation vectors. Every value is
/// finite and `T, D ≥ 1`; the constructor enforces both.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Array2<f32>,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f32>) -> Result<Self> {
        let (t, d) = values.dim();
        if t == 0 || d == 0 {
            return Err(Error::InvalidShape {
                detail: format!("feature matrix must be at least 1×1, got {t}×{d}"),
            });
        }
        for ((row, col), &v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::InvalidShape {
                    detail: format!("non-finite feature value {v} at row {row}, col {col}"),
                });
            }
        }
        Ok(FeatureMatrix { values })
    }

    /// Number of frames `T`.
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    /// Feature dimension `D`.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f32> {
        &self.values
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f32> {
        self.values.row(t)
    }

    pub fn into_values(self) -> Array2<f32> {
        self.values
    }
}

/// Per-frame integer class labels together with the size of the class
/// support. Every id is `< num_classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLabels {
    ids: Vec<u32>,
    num_classes: usize,
}

impl FrameLabels {
    pub fn new(ids: Vec<u32>, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::invalid_config("num_classes must be ≥ 1"));
        }
        for &id in &ids {
            if id as usize >= num_classes {
                return Err(Error::LabelOutOfRange {
                    id: id as u64,
                    num_classes,
                    context: "FrameLabels::new".into(),
                });
            }
        }
        Ok(FrameLabels { ids, num_classes })
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Which representation stream a feature file holds for an utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewTag {
    /// Features extracted from the unmodified input.
    Plain,
    /// Features extracted with the block mask applied to the input.
    Masked,
    /// Features extracted from the intact input, paired with a masked view.
    Unmasked,
}

impl fmt::Display for ViewTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViewTag::Plain => write!(f, "plain"),
            ViewTag::Masked => write!(f, "masked"),
            ViewTag::Unmasked => write!(f, "unmasked"),
        }
    }
}

/// Whether an utterance participates in estimator fitting or evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Fit,
    Eval,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitTag::Fit => write!(f, "fit"),
            SplitTag::Eval => write!(f, "eval"),
        }
    }
}

/// One `(layer, view) → file` entry of an utterance's feature map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub layer: u32,
    pub view: ViewTag,
    pub path: PathBuf,
}

/// All artifacts recorded for one utterance. Feature paths are keyed by
/// (layer, view); the key set varies by extraction mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub utt_id: String,
    pub split: SplitTag,
    /// Frame period of the representation, carried as metadata only.
    pub frame_period_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_path: Option<PathBuf>,
    pub features: Vec<FeatureEntry>,
}

impl UtteranceRecord {
    /// Path of the feature file for `(layer, view)`, if recorded.
    pub fn feature_path(&self, layer: u32, view: ViewTag) -> Option<&Path> {
        self.features
            .iter()
            .find(|e| e.layer == layer && e.view == view)
            .map(|e| e.path.as_path())
    }

    /// Sorted, deduplicated list of layers present in this record.
    pub fn layers(&self) -> Vec<u32> {
        let mut layers: Vec<u32> = self.features.iter().map(|e| e.layer).collect();
        layers.sort_unstable();
        layers.dedup();
        layers
    }
}

/// The dataset: a list of utterance records, each tagged `fit` or `eval`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: Vec<UtteranceRecord>,
}

impl DatasetManifest {
    pub fn records_in_split(&self, split: SplitTag) -> impl Iterator<Item = &UtteranceRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }
}

/// A manifest plus the directory its relative paths resolve against (the
/// directory containing the manifest file).
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: DatasetManifest,
    pub base_dir: PathBuf,
}

impl LoadedManifest {
    pub fn new(manifest: DatasetManifest, base_dir: impl Into<PathBuf>) -> Self {
        LoadedManifest {
            manifest,
            base_dir: base_dir.into(),
        }
    }

    /// Resolve a path from the manifest: absolute paths pass through,
    /// relative paths are joined onto the manifest directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

/// Violations found by [`validate_manifest`]. An empty report means the
/// manifest satisfies every invariant.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "ok")
        } else {
            for (i, v) in self.violations.iter().enumerate() {
                if i > 0 {
                    writeln!(f)?;
                }
                write!(f, "- {v}")?;
            }
            Ok(())
        }
    }
}

/// Read an `FMAT` file. Errors report the byte offset of the problem.
pub fn load_feature_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < FMAT_HEADER_LEN {
        return Err(Error::format(
            path,
            bytes.len() as u64,
            format!("truncated header: {} bytes, need {FMAT_HEADER_LEN}", bytes.len()),
        ));
    }
    if bytes[0..4] != FMAT_MAGIC {
        return Err(Error::format(path, 0, "bad magic, expected \"FMAT\""));
    }
    if bytes[4] != FMAT_VERSION {
        return Err(Error::format(
            path,
            4,
            format!("unsupported version {}, expected {FMAT_VERSION}", bytes[4]),
        ));
    }
    for (i, &b) in bytes[5..8].iter().enumerate() {
        if b != 0 {
            return Err(Error::format(path, 5 + i as u64, "nonzero padding byte"));
        }
    }
    let t = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let d = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    if t == 0 {
        return Err(Error::format(path, 8, "frame count T must be ≥ 1"));
    }
    if d == 0 {
        return Err(Error::format(path, 12, "dimension D must be ≥ 1"));
    }
    let expected = (t as u64) * (d as u64) * 4;
    let actual = (bytes.len() - FMAT_HEADER_LEN) as u64;
    if actual != expected {
        return Err(Error::format(
            path,
            FMAT_HEADER_LEN as u64 + actual.min(expected),
            format!("payload is {actual} bytes, expected {expected} for T={t}, D={d}"),
        ));
    }
    let mut values = Vec::with_capacity((t as usize) * (d as usize));
    for (i, chunk) in bytes[FMAT_HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFinite {
                path: path.to_path_buf(),
                row: i / d as usize,
                col: i % d as usize,
                offset: (FMAT_HEADER_LEN + 4 * i) as u64,
            });
        }
        values.push(v);
    }
    let array = Array2::from_shape_vec((t as usize, d as usize), values)
        .expect("shape checked against payload length");
    FeatureMatrix::new(array)
}

/// Write an `FMAT` file such that [`load_feature_matrix`] reproduces the
/// matrix bit-exactly.
pub fn store_feature_matrix(matrix: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (t, d) = matrix.values.dim();
    if t > u32::MAX as usize || d > u32::MAX as usize {
        return Err(Error::InvalidShape {
            detail: format!("matrix {t}×{d} exceeds the format's u32 shape fields"),
        });
    }
    let mut bytes = Vec::with_capacity(FMAT_HEADER_LEN + 4 * t * d);
    bytes.extend_from_slice(&FMAT_MAGIC);
    bytes.push(FMAT_VERSION);
    bytes.extend_from_slice(&[0, 0, 0]);
    bytes.extend_from_slice(&(t as u32).to_le_bytes());
    bytes.extend_from_slice(&(d as u32).to_le_bytes());
    for &v in matrix.values.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read a label file: first line `num_classes=<K>`, then one id per line.
pub fn load_labels(path: impl AsRef<Path>) -> Result<FrameLabels> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        detail: "empty file, expected num_classes=<K> header".into(),
    })?;
    let num_classes: usize = header
        .trim()
        .strip_prefix("num_classes=")
        .and_then(|k| k.parse().ok())
        .filter(|&k| k >= 1)
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            detail: format!("expected num_classes=<K> with K ≥ 1, got {header:?}"),
        })?;
    let mut ids = Vec::new();
    for (i, line) in lines.enumerate() {
        let id: u64 = line.trim().parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            detail: format!("expected a non-negative integer, got {line:?}"),
        })?;
        if id >= num_classes as u64 {
            return Err(Error::LabelOutOfRange {
                id,
                num_classes,
                context: format!("{}: line {}", path.display(), i + 2),
            });
        }
        ids.push(id as u32);
    }
    FrameLabels::new(ids, num_classes)
}

/// Write a label file that [`load_labels`] round-trips exactly.
pub fn store_labels(labels: &FrameLabels, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = format!("num_classes={}\n", labels.num_classes());
    for id in labels.ids() {
        text.push_str(&id.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read a manifest JSON file; relative paths inside it resolve against the
/// manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<LoadedManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        detail: e.to_string(),
    })?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    Ok(LoadedManifest::new(manifest, base_dir))
}

/// Write a manifest as pretty-printed JSON.
pub fn store_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Check every record of a manifest against the data on disk. Violations are
/// returned as data rather than errors so callers can report all of them at
/// once; the report is empty iff the manifest is fully consistent.
pub fn validate_manifest(loaded: &LoadedManifest) -> ValidationReport {
    let mut violations = Vec::new();
    let mut seen_ids: HashSet<&str> = HashSet::new();

    for record in &loaded.manifest.records {
        let id = record.utt_id.as_str();
        if !seen_ids.insert(id) {
            violations.push(format!("duplicate utt_id '{id}'"));
        }

        let mut seen_keys: HashSet<(u32, ViewTag)> = HashSet::new();
        let mut frame_counts: Vec<(String, usize)> = Vec::new();
        for entry in &record.features {
            if !seen_keys.insert((entry.layer, entry.view)) {
                violations.push(format!(
                    "'{id}': duplicate feature key (layer {}, view {})",
                    entry.layer, entry.view
                ));
            }
            let path = loaded.resolve(&entry.path);
            match load_feature_matrix(&path) {
                Ok(m) => frame_counts.push((format!("{}", path.display()), m.frames())),
                Err(e) => violations.push(format!("'{id}': {e}")),
            }
        }
        if let Some((first_path, first_t)) = frame_counts.first() {
            for (other_path, other_t) in &frame_counts[1..] {
                if other_t != first_t {
                    violations.push(format!(
                        "'{id}': frame count mismatch: {first_path} has T={first_t} \
                         but {other_path} has T={other_t}"
                    ));
                }
            }
        }

        if let Some(label_path) = &record.label_path {
            let path = loaded.resolve(label_path);
            match load_labels(&path) {
                Ok(labels) => {
                    if let Some((_, t)) = frame_counts.first() {
                        if labels.len() != *t {
                            violations.push(format!(
                                "'{id}': label length {} does not match feature frame count {t}",
                                labels.len()
                            ));
                        }
                    }
                }
                Err(e) => violations.push(format!("'{id}': {e}")),
            }
        }
    }

    ValidationReport { violations }
}
