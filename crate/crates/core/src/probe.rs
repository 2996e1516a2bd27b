//! The auxiliary predictor q(y|z): multinomial logistic regression or a
//! three-affine-layer MLP (ReLU after layers 1 and 2, inverted dropout after
//! each ReLU during training only), trained with plain SGD on mean
//! cross-entropy.
//!
//! Losses are computed internally in nats and converted to bits only at
//! reporting boundaries. Training is deterministic per seed: initialization,
//! the per-epoch shuffle, and dropout each draw from fixed-seed streams, and
//! parameter updates are serial, so identical config and data reproduce
//! parameters bit-for-bit.

use std::f64::consts::LN_2;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{self, FeatureMatrix, FrameLabels};
use crate::error::{Error, Result};

/// Rows per chunk in evaluation passes; keeps peak allocation modest.
const EVAL_CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Logistic,
    Mlp,
}

impl std::fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProbeKind::Logistic => write!(f, "logistic"),
            ProbeKind::Mlp => write!(f, "mlp"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    /// Width of both hidden layers (MLP only).
    pub hidden_dim: usize,
    /// Dropout probability after each ReLU (MLP only, training only).
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl ProbeConfig {
    pub fn logistic(seed: u64) -> Self {
        ProbeConfig {
            kind: ProbeKind::Logistic,
            hidden_dim: 512,
            dropout_rate: 0.1,
            learning_rate: 0.1,
            epochs: 10,
            batch_size: 256,
            seed,
        }
    }

    pub fn mlp(seed: u64) -> Self {
        ProbeConfig {
            kind: ProbeKind::Mlp,
            ..Self::logistic(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid_config("learning_rate must be positive and finite"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid_config("epochs must be ≥ 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid_config("batch_size must be ≥ 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid_config("dropout_rate must lie in [0, 1)"));
        }
        if self.kind == ProbeKind::Mlp && self.hidden_dim == 0 {
            return Err(Error::invalid_config("hidden_dim must be ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Affine {
    /// out×in.
    w: Array2<f64>,
    b: Array1<f64>,
}

impl Affine {
    fn zeros_like(&self) -> Affine {
        Affine {
            w: Array2::zeros(self.w.dim()),
            b: Array1::zeros(self.b.dim()),
        }
    }
}

/// A trained predictor. Layers: one affine map for logistic, three
/// (D→H→H→C) for the MLP. Evaluation never applies dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    kind: ProbeKind,
    layers: Vec<Affine>,
    dropout_rate: f64,
    input_dim: usize,
    num_classes: usize,
    initial_train_ce_nats: f64,
    final_train_ce_nats: f64,
}

impl ProbeModel {
    pub fn kind(&self) -> ProbeKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Mean training cross-entropy (nats) before the first update.
    pub fn initial_train_ce_nats(&self) -> f64 {
        self.initial_train_ce_nats
    }

    /// Mean training cross-entropy (nats) after the last epoch.
    pub fn final_train_ce_nats(&self) -> f64 {
        self.final_train_ce_nats
    }

    /// Build a logistic probe from explicit parameters (weight C×D, bias C).
    pub fn from_logistic_params(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        let (c, d) = weight.dim();
        if c < 2 || d == 0 {
            return Err(Error::invalid_config("logistic parameters need C ≥ 2 and D ≥ 1"));
        }
        if bias.len() != c {
            return Err(Error::dim_mismatch(format!(
                "bias has {} entries but weight has {c} rows",
                bias.len()
            )));
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid_config("parameters must be finite"));
        }
        Ok(ProbeModel {
            kind: ProbeKind::Logistic,
            layers: vec![Affine { w: weight, b: bias }],
            dropout_rate: 0.0,
            input_dim: d,
            num_classes: c,
            initial_train_ce_nats: f64::NAN,
            final_train_ce_nats: f64::NAN,
        })
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Xavier-uniform init: entries uniform in ±sqrt(6/(fan_in+fan_out)), biases
/// zero. Layer order and row-major entry order fix the draw sequence.
fn init_layers(cfg: &ProbeConfig, input_dim: usize, num_classes: usize) -> Vec<Affine> {
    let dims: Vec<(usize, usize)> = match cfg.kind {
        ProbeKind::Logistic => vec![(num_classes, input_dim)],
        ProbeKind::Mlp => vec![
            (cfg.hidden_dim, input_dim),
            (cfg.hidden_dim, cfg.hidden_dim),
            (num_classes, cfg.hidden_dim),
        ],
    };
    let mut rng = stream_rng(cfg.seed, 0);
    dims.into_iter()
        .map(|(out, inp)| {
            let bound = (6.0 / (inp + out) as f64).sqrt();
            let w = Array2::from_shape_fn((out, inp), |_| {
                (rng.random::<f64>() * 2.0 - 1.0) * bound
            });
            Affine {
                w,
                b: Array1::zeros(out),
            }
        })
        .collect()
}

fn affine(x: ArrayView2<f64>, layer: &Affine) -> Array2<f64> {
    let mut out = x.dot(&layer.w.t());
    out += &layer.b;
    out
}

fn logits_eval(layers: &[Affine], x: ArrayView2<f64>) -> Array2<f64> {
    let mut h = affine(x, &layers[0]);
    for layer in &layers[1..] {
        h.mapv_inplace(|v| v.max(0.0));
        h = affine(h.view(), layer);
    }
    h
}

/// Normalize logits rows into log-probabilities in place.
fn log_softmax_inplace(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
}

/// Mean cross-entropy in nats of the targets under the current parameters,
/// dropout off, computed in fixed chunk order.
fn eval_mean_ce_nats(layers: &[Affine], x: ArrayView2<f64>, targets: &[u32]) -> f64 {
    let n = x.nrows();
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let mut logits = logits_eval(layers, x.slice(ndarray::s![start..end, ..]));
        log_softmax_inplace(&mut logits);
        for (i, &y) in targets[start..end].iter().enumerate() {
            total -= logits[(i, y as usize)];
        }
        start = end;
    }
    total / n as f64
}

/// Forward/backward over one batch: returns the mean cross-entropy (nats)
/// and per-layer gradients. `masks` carries one inverted-dropout mask per
/// hidden activation when training with dropout; `None` means evaluation
/// semantics (gradient checks, logistic training).
fn forward_backward(
    layers: &[Affine],
    x: ArrayView2<f64>,
    targets: &[u32],
    masks: Option<&[Array2<f64>]>,
) -> (f64, Vec<Affine>) {
    let b = x.nrows() as f64;
    // Forward, keeping pre-activations and post-dropout activations.
    let mut pre: Vec<Array2<f64>> = Vec::with_capacity(layers.len());
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(layers.len());
    let mut h = affine(x, &layers[0]);
    pre.push(h.clone());
    for (l, layer) in layers[1..].iter().enumerate() {
        h.mapv_inplace(|v| v.max(0.0));
        if let Some(masks) = masks {
            h *= &masks[l];
        }
        acts.push(h.clone());
        h = affine(h.view(), layer);
        pre.push(h.clone());
    }
    log_softmax_inplace(&mut h);
    let mut loss = 0.0;
    for (i, &y) in targets.iter().enumerate() {
        loss -= h[(i, y as usize)];
    }
    loss /= b;

    // d(mean CE)/d(logits) = (softmax − onehot)/B.
    let mut delta = h;
    delta.mapv_inplace(f64::exp);
    for (i, &y) in targets.iter().enumerate() {
        delta[(i, y as usize)] -= 1.0;
    }
    delta /= b;

    let mut grads: Vec<Affine> = layers.iter().map(Affine::zeros_like).collect();
    for l in (0..layers.len()).rev() {
        let input = if l == 0 { x.view() } else { acts[l - 1].view() };
        grads[l].w = delta.t().dot(&input);
        grads[l].b = delta.sum_axis(Axis(0));
        if l == 0 {
            break;
        }
        let mut upstream = delta.dot(&layers[l].w);
        if let Some(masks) = masks {
            upstream *= &masks[l - 1];
        }
        // ReLU gate from the pre-activation of layer l−1.
        upstream.zip_mut_with(&pre[l - 1], |g, &z| {
            if z <= 0.0 {
                *g = 0.0;
            }
        });
        delta = upstream;
    }
    (loss, grads)
}

/// Train a probe with SGD on mean cross-entropy. The shuffle order is a pure
/// function of (seed, epoch); dropout draws likewise.
pub fn train_probe(
    inputs: &FeatureMatrix,
    targets: &FrameLabels,
    cfg: &ProbeConfig,
) -> Result<ProbeModel> {
    cfg.validate()?;
    let n = inputs.frames();
    if targets.len() != n {
        return Err(Error::dim_mismatch(format!(
            "{} feature frames but {} targets",
            n,
            targets.len()
        )));
    }
    let num_classes = targets.num_classes();
    if num_classes < 2 {
        return Err(Error::invalid_config(
            "probe needs num_classes ≥ 2; a 1-class problem carries no information",
        ));
    }
    let x = inputs.values().mapv(f64::from);
    let y = targets.ids();
    let mut layers = init_layers(cfg, inputs.dim(), num_classes);
    let initial_train_ce_nats = eval_mean_ce_nats(&layers, x.view(), y);
    let use_dropout = cfg.kind == ProbeKind::Mlp && cfg.dropout_rate > 0.0;
    let keep_scale = 1.0 / (1.0 - cfg.dropout_rate);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream_rng(cfg.seed, 1 + 2 * epoch as u64));
        let mut drop_rng = stream_rng(cfg.seed, 2 + 2 * epoch as u64);
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let bx = x.select(Axis(0), chunk);
            let by: Vec<u32> = chunk.iter().map(|&i| y[i]).collect();
            let masks = use_dropout.then(|| {
                (0..layers.len() - 1)
                    .map(|_| {
                        Array2::from_shape_fn((chunk.len(), cfg.hidden_dim), |_| {
                            if drop_rng.random::<f64>() < cfg.dropout_rate {
                                0.0
                            } else {
                                keep_scale
                            }
                        })
                    })
                    .collect::<Vec<_>>()
            });
            let (loss, grads) = forward_backward(&layers, bx.view(), &by, masks.as_deref());
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            for (layer, grad) in layers.iter_mut().zip(&grads) {
                layer.w.scaled_add(-cfg.learning_rate, &grad.w);
                layer.b.scaled_add(-cfg.learning_rate, &grad.b);
            }
        }
        // Backstop: a non-finite parameter without a non-finite batch loss.
        if layers
            .iter()
            .any(|l| l.w.iter().chain(l.b.iter()).any(|v| !v.is_finite()))
        {
            let last_batch = n.div_ceil(cfg.batch_size).saturating_sub(1);
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: last_batch,
            });
        }
    }
    let final_train_ce_nats = eval_mean_ce_nats(&layers, x.view(), y);
    Ok(ProbeModel {
        kind: cfg.kind,
        layers,
        dropout_rate: cfg.dropout_rate,
        input_dim: inputs.dim(),
        num_classes,
        initial_train_ce_nats,
        final_train_ce_nats,
    })
}

/// Log-probability matrix (T×C, natural log) with dropout disabled; each row
/// is a log-softmax (log-sum-exp = 0 within 1e−6).
pub fn predict_log_probs(model: &ProbeModel, features: &FeatureMatrix) -> Result<Array2<f64>> {
    if features.dim() != model.input_dim {
        return Err(Error::dim_mismatch(format!(
            "features have dim {} but probe expects {}",
            features.dim(),
            model.input_dim
        )));
    }
    let x = features.values().mapv(f64::from);
    let n = x.nrows();
    let mut out = Array2::zeros((n, model.num_classes));
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let mut logits = logits_eval(&model.layers, x.slice(ndarray::s![start..end, ..]));
        log_softmax_inplace(&mut logits);
        out.slice_mut(ndarray::s![start..end, ..]).assign(&logits);
        start = end;
    }
    Ok(out)
}

/// Mean −log₂ q(target|feature) over the given frames, dropout disabled.
pub fn cross_entropy_bits(
    model: &ProbeModel,
    features: &FeatureMatrix,
    targets: &FrameLabels,
) -> Result<f64> {
    if features.dim() != model.input_dim {
        return Err(Error::dim_mismatch(format!(
            "features have dim {} but probe expects {}",
            features.dim(),
            model.input_dim
        )));
    }
    if targets.len() != features.frames() {
        return Err(Error::dim_mismatch(format!(
            "{} feature frames but {} targets",
            features.frames(),
            targets.len()
        )));
    }
    if targets.num_classes() != model.num_classes {
        return Err(Error::dim_mismatch(format!(
            "targets declare {} classes but probe has {}",
            targets.num_classes(),
            model.num_classes
        )));
    }
    let x = features.values().mapv(f64::from);
    Ok(eval_mean_ce_nats(&model.layers, x.view(), targets.ids()) / LN_2)
}

/// Compare analytic gradients of mean cross-entropy against central finite
/// differences (dropout disabled). Returns the maximum relative error
/// `|a − n| / max(|a| + |n|, 1e−3)` over every parameter.
///
/// Central differences are only valid inside a smooth region, so hidden
/// units whose pre-activation sits within the perturbation radius of the
/// ReLU kink are first moved clear of it by a bias shift; the comparison
/// then runs at the shifted parameter point.
pub fn gradient_check(
    model: &ProbeModel,
    features: &FeatureMatrix,
    targets: &FrameLabels,
    epsilon: f64,
) -> Result<f64> {
    if features.dim() != model.input_dim {
        return Err(Error::dim_mismatch("gradient check feature dim"));
    }
    if targets.len() != features.frames() {
        return Err(Error::dim_mismatch("gradient check target length"));
    }
    let x = features.values().mapv(f64::from);
    let y = targets.ids();
    let mut layers = model.layers.clone();
    // Perturbing one parameter by ε moves a layer's pre-activations by at
    // most `reach`: directly through that layer's own weights and bias, or
    // propagated from an earlier layer through ReLU (1-Lipschitz) and this
    // layer's weight rows.
    let mut h = x.clone();
    let mut reach = 0.0f64;
    for l in 0..layers.len().saturating_sub(1) {
        let max_abs_in = h.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let row_norm = layers[l]
            .w
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        reach = (epsilon * max_abs_in).max(reach * row_norm);
        let margin = 2.0 * reach;
        let mut z = affine(h.view(), &layers[l]);
        for j in 0..z.ncols() {
            if z.column(j).iter().all(|v| v.abs() > margin) {
                continue;
            }
            // Each row blocks a 2·margin window, so scanning shifts in
            // 2·margin steps must find a clear one within 2·rows + 2 tries.
            let mut shift = None;
            'scan: for k in 1..=(2 * z.nrows() + 2) {
                for sign in [1.0, -1.0] {
                    let delta = sign * 2.0 * margin * k as f64;
                    if z.column(j).iter().all(|v| (v + delta).abs() > margin) {
                        shift = Some(delta);
                        break 'scan;
                    }
                }
            }
            let delta = shift.expect("some scanned bias shift clears the kink");
            layers[l].b[j] += delta;
            z.column_mut(j).mapv_inplace(|v| v + delta);
        }
        h = z.mapv(|v| v.max(0.0));
    }
    let (_, analytic) = forward_backward(&layers, x.view(), y, None);
    let mut max_rel = 0.0f64;
    for l in 0..layers.len() {
        for flat in 0..(layers[l].w.len() + layers[l].b.len()) {
            let read = |layers: &mut Vec<Affine>, delta: f64| -> f64 {
                {
                    let layer = &mut layers[l];
                    if flat < layer.w.len() {
                        let cols = layer.w.ncols();
                        layer.w[(flat / cols, flat % cols)] += delta;
                    } else {
                        layer.b[flat - layer.w.len()] += delta;
                    }
                }
                let loss = eval_mean_ce_nats(layers, x.view(), y);
                {
                    let layer = &mut layers[l];
                    if flat < layer.w.len() {
                        let cols = layer.w.ncols();
                        layer.w[(flat / cols, flat % cols)] -= delta;
                    } else {
                        layer.b[flat - layer.w.len()] -= delta;
                    }
                }
                loss
            };
            let plus = read(&mut layers, epsilon);
            let minus = read(&mut layers, -epsilon);
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = if flat < analytic[l].w.len() {
                let cols = analytic[l].w.ncols();
                analytic[l].w[(flat / cols, flat % cols)]
            } else {
                analytic[l].b[flat - analytic[l].w.len()]
            };
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-3);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}

/// Persist a probe: one FMAT file per parameter tensor (f32) plus a text
/// sidecar with the structural fields.
pub fn store_probe(model: &ProbeModel, dir: &Path, stem: &str) -> Result<()> {
    for (l, layer) in model.layers.iter().enumerate() {
        let w32 = FeatureMatrix::new(layer.w.mapv(|v| v as f32))?;
        datamodel::store_feature_matrix(&w32, dir.join(format!("{stem}.w{l}.fmat")))?;
        let b32 = FeatureMatrix::new(
            layer
                .b
                .mapv(|v| v as f32)
                .insert_axis(Axis(0)),
        )?;
        datamodel::store_feature_matrix(&b32, dir.join(format!("{stem}.b{l}.fmat")))?;
    }
    let sidecar = format!(
        "kind={} layers={} input_dim={} num_classes={} dropout={:?}\n",
        model.kind,
        model.layers.len(),
        model.input_dim,
        model.num_classes,
        model.dropout_rate,
    );
    let path = dir.join(format!("{stem}.probe"));
    fs::write(&path, sidecar).map_err(|e| Error::io(path, e))
}

/// Load a probe persisted by [`store_probe`]. Parameters pass through the
/// f32 file format, so values are f32-rounded.
pub fn load_probe(dir: &Path, stem: &str) -> Result<ProbeModel> {
    let path = dir.join(format!("{stem}.probe"));
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut fields = std::collections::HashMap::new();
    for field in text.split_whitespace() {
        if let Some((k, v)) = field.split_once('=') {
            fields.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| -> Result<&String> {
        fields.get(k).ok_or_else(|| Error::Parse {
            path: path.clone(),
            line: 1,
            detail: format!("missing {k}= field"),
        })
    };
    let kind = match get("kind")?.as_str() {
        "logistic" => ProbeKind::Logistic,
        "mlp" => ProbeKind::Mlp,
        other => {
            return Err(Error::Parse {
                path: path.clone(),
                line: 1,
                detail: format!("unknown probe kind {other:?}"),
            })
        }
    };
    let parse_usize = |k: &str| -> Result<usize> {
        get(k)?.parse().map_err(|_| Error::Parse {
            path: path.clone(),
            line: 1,
            detail: format!("non-integer {k}= field"),
        })
    };
    let n_layers = parse_usize("layers")?;
    let input_dim = parse_usize("input_dim")?;
    let num_classes = parse_usize("num_classes")?;
    let dropout_rate: f64 = get("dropout")?.parse().unwrap_or(0.0);
    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let w = datamodel::load_feature_matrix(dir.join(format!("{stem}.w{l}.fmat")))?
            .into_values()
            .mapv(f64::from);
        let b2 = datamodel::load_feature_matrix(dir.join(format!("{stem}.b{l}.fmat")))?
            .into_values()
            .mapv(f64::from);
        let b = b2.row(0).to_owned();
        if b.len() != w.nrows() {
            return Err(Error::dim_mismatch(format!(
                "layer {l}: bias has {} entries but weight has {} rows",
                b.len(),
                w.nrows()
            )));
        }
        layers.push(Affine { w, b });
    }
    Ok(ProbeModel {
        kind,
        layers,
        dropout_rate,
        input_dim,
        num_classes,
        initial_train_ce_nats: f64::NAN,
        final_train_ce_nats: f64::NAN,
    })
}
