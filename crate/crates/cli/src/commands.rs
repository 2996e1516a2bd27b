//! Command runners. `replay` re-executes reports through the same
//! `run_config` dispatch that fresh invocations use, so a report and its
//! replay follow one code path.

use std::path::Path;

use miprobe_core::datamodel::{load_manifest, validate_manifest, LoadedManifest};
use miprobe_core::mi::MIEstimate;
use miprobe_core::pipeline::{
    bisect_records, layers_in_manifest, pairs_fit_eval, pool_pairs, pool_supervised,
    seeded_supervised, seeded_unsupervised, PairingMode, PooledPairs,
};
use miprobe_core::probe::ProbeKind;
use miprobe_core::validation::{run_all, ValidationScale};
use miprobe_core::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::report::{MetricMode, ProbeSettings, ReportConfig, ViewParams};

/// One layer-scan curve sample.
#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub layer: u32,
    pub metric: MetricMode,
    pub probe: ProbeKind,
    #[serde(flatten)]
    pub estimate: MIEstimate,
}

/// One checkpoint-scan curve sample.
#[derive(Debug, Clone, Serialize)]
pub struct CheckpointPoint {
    pub step: usize,
    pub manifest: String,
    pub metric: MetricMode,
    pub probe: ProbeKind,
    #[serde(flatten)]
    pub estimate: MIEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_vs_baseline: Option<f64>,
}

/// Load a manifest and fail with the full violation report unless it is
/// internally consistent.
pub fn load_and_validate(path: &Path) -> Result<LoadedManifest> {
    let loaded = load_manifest(path)?;
    let report = validate_manifest(&loaded);
    if !report.is_empty() {
        return Err(Error::ManifestInvalid {
            report: report.to_string(),
        });
    }
    Ok(loaded)
}

fn pairing_mode(mode: MetricMode, view: &ViewParams) -> Result<PairingMode> {
    match mode {
        MetricMode::Shift => Ok(PairingMode::Shift {
            frames: view.shift_frames,
        }),
        MetricMode::Mask => Ok(PairingMode::Mask {
            period: view.mask_period,
            masked_per_period: view.mask_frames,
            positions: view.positions,
        }),
        MetricMode::Supervised => Err(Error::invalid_config(
            "supervised mode has no view pairing",
        )),
    }
}

fn combined_mask_ratio(fit: &PooledPairs, eval: &PooledPairs) -> Option<f64> {
    match (fit.mask_ratio, eval.mask_ratio) {
        (Some(rf), Some(re)) => {
            let (sf, se) = (fit.source_frames as f64, eval.source_frames as f64);
            Some((rf * sf + re * se) / (sf + se))
        }
        _ => None,
    }
}

/// One estimate per requested probe family for a single layer and metric.
fn estimates_for(
    loaded: &LoadedManifest,
    layer: u32,
    mode: MetricMode,
    view: &ViewParams,
    probe: &ProbeSettings,
) -> Result<Vec<(ProbeKind, MIEstimate)>> {
    let mut out = Vec::with_capacity(probe.kinds.len());
    match mode {
        MetricMode::Supervised => {
            let (fit, eval) = miprobe_core::pipeline::supervised_fit_eval(loaded, layer)?;
            for &kind in &probe.kinds {
                let est = seeded_supervised(&fit, &eval, &probe.config(kind), &probe.seeds)?;
                out.push((kind, est));
            }
        }
        MetricMode::Shift | MetricMode::Mask => {
            let pairing = pairing_mode(mode, view)?;
            let (fit, eval) = pairs_fit_eval(loaded, layer, &pairing)?;
            for &kind in &probe.kinds {
                let est = seeded_unsupervised(
                    &fit.views,
                    &eval.views,
                    view.k,
                    &probe.config(kind),
                    &probe.seeds,
                )?;
                out.push((kind, est));
            }
        }
    }
    Ok(out)
}

fn run_probe_supervised(manifest: &Path, layer: u32, probe: &ProbeSettings) -> Result<Value> {
    let loaded = load_and_validate(manifest)?;
    let (fit, eval) = miprobe_core::pipeline::supervised_fit_eval(&loaded, layer)?;
    let mut estimates = Vec::new();
    for &kind in &probe.kinds {
        estimates.push(seeded_supervised(&fit, &eval, &probe.config(kind), &probe.seeds)?);
    }
    Ok(json!({ "layer": layer, "estimates": estimates }))
}

fn run_probe_unsupervised(
    manifest: &Path,
    layer: u32,
    mode: MetricMode,
    view: &ViewParams,
    probe: &ProbeSettings,
) -> Result<Value> {
    let loaded = load_and_validate(manifest)?;
    let pairing = pairing_mode(mode, view)?;
    let (fit, eval) = pairs_fit_eval(&loaded, layer, &pairing)?;
    let mut estimates = Vec::new();
    for &kind in &probe.kinds {
        estimates.push(seeded_unsupervised(
            &fit.views,
            &eval.views,
            view.k,
            &probe.config(kind),
            &probe.seeds,
        )?);
    }
    Ok(json!({
        "layer": layer,
        "pairing": {
            "mode": mode,
            "shift_frames": fit.shift_frames,
            "mask_ratio": combined_mask_ratio(&fit, &eval),
            "fit_pairs": fit.views.len(),
            "eval_pairs": eval.views.len(),
        },
        "estimates": estimates,
    }))
}

fn run_layer_scan(
    manifest: &Path,
    modes: &[MetricMode],
    view: &ViewParams,
    probe: &ProbeSettings,
) -> Result<Value> {
    let loaded = load_and_validate(manifest)?;
    let layers = layers_in_manifest(&loaded.manifest);
    if layers.is_empty() {
        return Err(Error::insufficient("manifest lists no feature dumps"));
    }
    // Parallel across layers; results keep layer order regardless of
    // completion order.
    let per_layer: Result<Vec<Vec<CurvePoint>>> = layers
        .par_iter()
        .map(|&layer| {
            let mut points = Vec::new();
            for &mode in modes {
                for (kind, estimate) in estimates_for(&loaded, layer, mode, view, probe)? {
                    points.push(CurvePoint {
                        layer,
                        metric: mode,
                        probe: kind,
                        estimate,
                    });
                }
            }
            Ok(points)
        })
        .collect();
    let curve: Vec<CurvePoint> = per_layer?.into_iter().flatten().collect();
    let argmax: Vec<Value> = modes
        .iter()
        .flat_map(|&mode| probe.kinds.iter().map(move |&kind| (mode, kind)))
        .map(|(mode, kind)| {
            let best = curve
                .iter()
                .filter(|p| p.metric == mode && p.probe == kind)
                .max_by(|a, b| {
                    a.estimate
                        .value_bits
                        .partial_cmp(&b.estimate.value_bits)
                        .expect("estimates are finite")
                })
                .expect("every mode/kind has one point per layer");
            json!({ "metric": mode, "probe": kind, "layer": best.layer })
        })
        .collect();
    Ok(json!({ "curve": curve, "argmax": argmax }))
}

fn scan_points_for_manifest(
    index: usize,
    manifest: &Path,
    half_split: bool,
    modes: &[MetricMode],
    view: &ViewParams,
    probe: &ProbeSettings,
) -> Result<Vec<CheckpointPoint>> {
    let loaded = load_and_validate(manifest)?;
    let layers = layers_in_manifest(&loaded.manifest);
    let layer = *layers
        .first()
        .ok_or_else(|| Error::insufficient("manifest lists no feature dumps"))?;
    let mut points = Vec::new();
    for &mode in modes {
        let per_kind: Vec<(ProbeKind, MIEstimate)> = if half_split {
            let (fit_recs, eval_recs) = bisect_records(&loaded.manifest.records)?;
            match mode {
                MetricMode::Supervised => {
                    let fit = pool_supervised(&loaded, &fit_recs, layer)?;
                    let eval = pool_supervised(&loaded, &eval_recs, layer)?;
                    probe
                        .kinds
                        .iter()
                        .map(|&kind| {
                            seeded_supervised(&fit, &eval, &probe.config(kind), &probe.seeds)
                                .map(|est| (kind, est))
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                MetricMode::Shift | MetricMode::Mask => {
                    let pairing = pairing_mode(mode, view)?;
                    let fit = pool_pairs(&loaded, &fit_recs, layer, &pairing)?;
                    let eval = pool_pairs(&loaded, &eval_recs, layer, &pairing)?;
                    probe
                        .kinds
                        .iter()
                        .map(|&kind| {
                            seeded_unsupervised(
                                &fit.views,
                                &eval.views,
                                view.k,
                                &probe.config(kind),
                                &probe.seeds,
                            )
                            .map(|est| (kind, est))
                        })
                        .collect::<Result<Vec<_>>>()?
                }
            }
        } else {
            estimates_for(&loaded, layer, mode, view, probe)?
        };
        for (kind, estimate) in per_kind {
            points.push(CheckpointPoint {
                step: index,
                manifest: manifest.display().to_string(),
                metric: mode,
                probe: kind,
                estimate,
                delta_vs_baseline: None,
            });
        }
    }
    Ok(points)
}

fn run_checkpoint_scan(
    manifests: &[std::path::PathBuf],
    half_split: bool,
    baseline: Option<usize>,
    modes: &[MetricMode],
    view: &ViewParams,
    probe: &ProbeSettings,
) -> Result<Value> {
    if manifests.is_empty() {
        return Err(Error::invalid_config("checkpoint scan needs at least one manifest"));
    }
    if let Some(b) = baseline {
        if b >= manifests.len() {
            return Err(Error::invalid_config(format!(
                "baseline index {b} out of range for {} checkpoints",
                manifests.len()
            )));
        }
    }
    let per_manifest: Result<Vec<Vec<CheckpointPoint>>> = manifests
        .par_iter()
        .enumerate()
        .map(|(i, m)| scan_points_for_manifest(i, m, half_split, modes, view, probe))
        .collect();
    let mut points: Vec<CheckpointPoint> = per_manifest?.into_iter().flatten().collect();
    if let Some(b) = baseline {
        let base_values: Vec<(MetricMode, ProbeKind, f64)> = points
            .iter()
            .filter(|p| p.step == b)
            .map(|p| (p.metric, p.probe, p.estimate.value_bits))
            .collect();
        for p in &mut points {
            p.delta_vs_baseline = base_values
                .iter()
                .find(|(m, k, _)| *m == p.metric && *k == p.probe)
                .map(|(_, _, v)| p.estimate.value_bits - v);
        }
    }
    Ok(json!({ "points": points, "baseline": baseline }))
}

fn run_synth_validate(scale: &ValidationScale, seed: u64) -> Result<Value> {
    let outcomes = run_all(scale, seed)?;
    let passed = outcomes.iter().all(|o| o.passed);
    Ok(json!({ "outcomes": outcomes, "passed": passed }))
}

/// Execute any embedded configuration and return its results subtree.
pub fn run_config(config: &ReportConfig) -> Result<Value> {
    match config {
        ReportConfig::ProbeSupervised {
            manifest,
            layer,
            probe,
        } => run_probe_supervised(manifest, *layer, probe),
        ReportConfig::ProbeUnsupervised {
            manifest,
            layer,
            mode,
            view,
            probe,
        } => run_probe_unsupervised(manifest, *layer, *mode, view, probe),
        ReportConfig::LayerScan {
            manifest,
            modes,
            view,
            probe,
        } => run_layer_scan(manifest, modes, view, probe),
        ReportConfig::CheckpointScan {
            manifests,
            half_split,
            baseline,
            modes,
            view,
            probe,
        } => run_checkpoint_scan(manifests, *half_split, *baseline, modes, view, probe),
        ReportConfig::SynthValidate { scale, seed, .. } => run_synth_validate(scale, *seed),
    }
}

/// Emit one mask-spec file per utterance; returns the written file names.
pub fn emit_masks(
    manifest: &Path,
    period: usize,
    masked_per_period: usize,
    out_dir: &Path,
) -> Result<Vec<String>> {
    use miprobe_core::views::{block_mask_spec, store_mask_spec};
    let loaded = load_and_validate(manifest)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut records: Vec<_> = loaded.manifest.records.iter().collect();
    records.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    let mut written = Vec::with_capacity(records.len());
    for rec in records {
        let entry = rec.features.first().ok_or_else(|| Error::ManifestRecord {
            utt_id: rec.utt_id.clone(),
            detail: "no feature dumps to take the frame count from".into(),
        })?;
        let frames = miprobe_core::datamodel::load_feature_matrix(loaded.resolve(&entry.path))?
            .frames();
        let spec = block_mask_spec(frames, period, masked_per_period)?;
        let name = format!("{}.mask", rec.utt_id);
        store_mask_spec(&spec, out_dir.join(&name))?;
        written.push(name);
    }
    Ok(written)
}

/// CSV rendering of a layer-scan curve.
pub fn layer_csv(results: &Value) -> String {
    let mut csv = String::from("layer,metric,probe,value_bits,seed_variance\n");
    if let Some(points) = results["curve"].as_array() {
        for p in points {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                p["layer"], p["metric"].as_str().unwrap_or(""), p["probe"].as_str().unwrap_or(""),
                p["value_bits"], p["seed_variance"]
            ));
        }
    }
    csv
}

/// CSV rendering of a checkpoint-scan curve.
pub fn checkpoint_csv(results: &Value) -> String {
    let mut csv = String::from("step,metric,probe,value_bits,seed_variance,delta_vs_baseline\n");
    if let Some(points) = results["points"].as_array() {
        for p in points {
            let delta = match &p["delta_vs_baseline"] {
                Value::Null => String::new(),
                v => v.to_string(),
            };
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p["step"], p["metric"].as_str().unwrap_or(""), p["probe"].as_str().unwrap_or(""),
                p["value_bits"], p["seed_variance"], delta
            ));
        }
    }
    csv
}

/// Human-readable one-line summaries of a results subtree.
pub fn summarize(results: &Value) -> Vec<String> {
    let mut lines = Vec::new();
    if let Some(ests) = results["estimates"].as_array() {
        for e in ests {
            lines.push(format!(
                "{} {}: {} bits (seed variance {})",
                e["kind"].as_str().unwrap_or("?"),
                e["probe_kind"].as_str().unwrap_or("?"),
                e["value_bits"],
                e["seed_variance"]
            ));
        }
    }
    if let Some(points) = results["curve"].as_array() {
        for p in points {
            lines.push(format!(
                "layer {} {} {}: {} bits",
                p["layer"],
                p["metric"].as_str().unwrap_or("?"),
                p["probe"].as_str().unwrap_or("?"),
                p["value_bits"]
            ));
        }
        if let Some(entries) = results["argmax"].as_array() {
            for a in entries {
                lines.push(format!(
                    "argmax {} {}: layer {}",
                    a["metric"].as_str().unwrap_or("?"),
                    a["probe"].as_str().unwrap_or("?"),
                    a["layer"]
                ));
            }
        }
    }
    if let Some(points) = results["points"].as_array() {
        for p in points {
            let delta = match &p["delta_vs_baseline"] {
                Value::Null => String::new(),
                v => format!(" (delta vs baseline {v})"),
            };
            lines.push(format!(
                "step {} {} {}: {} bits{delta}",
                p["step"],
                p["metric"].as_str().unwrap_or("?"),
                p["probe"].as_str().unwrap_or("?"),
                p["value_bits"]
            ));
        }
    }
    if let Some(outcomes) = results["outcomes"].as_array() {
        for o in outcomes {
            let tag = if o["passed"].as_bool().unwrap_or(false) {
                "[PASS]"
            } else {
                "[FAIL]"
            };
            lines.push(format!(
                "{tag} {} — {}",
                o["name"].as_str().unwrap_or("?"),
                o["details"].as_str().unwrap_or("")
            ));
        }
    }
    lines
}

