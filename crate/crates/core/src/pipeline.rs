//! Pooling of manifest-backed feature dumps into estimator inputs.
//!
//! The command-line tools and the validation suite both go through these
//! functions, so a report produced from files and a value computed from
//! in-memory arrays follow the identical code path. Records are always
//! pooled in sorted `utt_id` order, making pooled arrays independent of
//! manifest record order.

use ndarray::{concatenate, Array2, Axis};

use crate::datamodel::{
    load_feature_matrix, load_labels, DatasetManifest, FeatureMatrix, FrameLabels, LoadedManifest,
    SplitTag, UtteranceRecord, ViewTag,
};
use crate::error::{Error, Result};
use crate::mi::{
    run_seeded, supervised_lower_bound, unsupervised_lower_bound, LabeledFrames, MIEstimate,
    PairedViews,
};
use crate::probe::ProbeConfig;
use crate::views::{block_mask_spec, masked_pairing, time_shift_pairing, MaskPositions};

/// How rows of paired views are produced for the unsupervised estimator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairingMode {
    /// Pair each plain frame with the frame `frames` steps later: the
    /// earlier frame predicts the cluster of the later one.
    Shift { frames: usize },
    /// Pair masked-view rows with unmasked-view rows at the same time
    /// index, keeping either masked positions only or every frame.
    Mask {
        period: usize,
        masked_per_period: usize,
        positions: MaskPositions,
    },
}

/// Paired views pooled across records, with bookkeeping for reports.
#[derive(Debug, Clone)]
pub struct PooledPairs {
    pub views: PairedViews,
    /// Total source frames across pooled records (before pairing).
    pub source_frames: usize,
    /// Fraction of source frames that were masked, for mask pairing.
    pub mask_ratio: Option<f64>,
    /// Shift distance, for shift pairing.
    pub shift_frames: Option<usize>,
}

fn record_error(rec: &UtteranceRecord, detail: impl Into<String>) -> Error {
    Error::ManifestRecord {
        utt_id: rec.utt_id.clone(),
        detail: detail.into(),
    }
}

/// Records of one split, sorted by utterance id.
pub fn sorted_split(loaded: &LoadedManifest, split: SplitTag) -> Vec<&UtteranceRecord> {
    let mut records: Vec<_> = loaded.manifest.records_in_split(split).collect();
    records.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    records
}

/// Sorted unique layer ids present anywhere in the manifest.
pub fn layers_in_manifest(manifest: &DatasetManifest) -> Vec<u32> {
    let mut layers: Vec<u32> = manifest
        .records
        .iter()
        .flat_map(|r| r.layers())
        .collect();
    layers.sort_unstable();
    layers.dedup();
    layers
}

/// Deterministic bisection for checkpoint scans: records sorted by
/// utterance id, first half (rounding up) fits, the rest evaluates.
pub fn bisect_records(records: &[UtteranceRecord]) -> Result<(Vec<&UtteranceRecord>, Vec<&UtteranceRecord>)> {
    if records.len() < 2 {
        return Err(Error::insufficient(format!(
            "bisection needs at least 2 utterances, got {}",
            records.len()
        )));
    }
    let first_split = records[0].split;
    if records.iter().any(|r| r.split != first_split) {
        return Err(Error::invalid_config(
            "bisection expects records carrying a single split tag",
        ));
    }
    let mut sorted: Vec<&UtteranceRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    let eval = sorted.split_off(sorted.len().div_ceil(2));
    Ok((sorted, eval))
}

fn record_feature(
    loaded: &LoadedManifest,
    rec: &UtteranceRecord,
    layer: u32,
    view: ViewTag,
) -> Result<FeatureMatrix> {
    let path = rec
        .feature_path(layer, view)
        .ok_or_else(|| record_error(rec, format!("no layer-{layer} {view} feature dump")))?;
    load_feature_matrix(loaded.resolve(path))
}

fn stack(parts: Vec<Array2<f32>>) -> Result<FeatureMatrix> {
    let views: Vec<_> = parts.iter().map(Array2::view).collect();
    let stacked = concatenate(Axis(0), &views)
        .map_err(|e| Error::dim_mismatch(format!("pooled dumps do not stack: {e}")))?;
    FeatureMatrix::new(stacked)
}

/// Pool one layer's plain dumps and frame labels across `records`.
pub fn pool_supervised(
    loaded: &LoadedManifest,
    records: &[&UtteranceRecord],
    layer: u32,
) -> Result<LabeledFrames> {
    if records.is_empty() {
        return Err(Error::insufficient("no records to pool"));
    }
    let mut parts = Vec::with_capacity(records.len());
    let mut ids = Vec::new();
    let mut num_classes = None;
    for rec in records {
        let feats = record_feature(loaded, rec, layer, ViewTag::Plain)?;
        let label_path = rec
            .label_path
            .as_deref()
            .ok_or_else(|| record_error(rec, "no label file"))?;
        let labels = load_labels(loaded.resolve(label_path))?;
        if labels.len() != feats.frames() {
            return Err(record_error(
                rec,
                format!(
                    "label count {} != frame count {}",
                    labels.len(),
                    feats.frames()
                ),
            ));
        }
        match num_classes {
            None => num_classes = Some(labels.num_classes()),
            Some(k) if k != labels.num_classes() => {
                return Err(record_error(
                    rec,
                    format!(
                        "num_classes {} disagrees with {} from earlier records",
                        labels.num_classes(),
                        k
                    ),
                ));
            }
            Some(_) => {}
        }
        ids.extend_from_slice(labels.ids());
        parts.push(feats.into_values());
    }
    let features = stack(parts)?;
    let labels = FrameLabels::new(ids, num_classes.expect("records nonempty"))?;
    LabeledFrames::new(features, labels)
}

/// Pool one layer's paired views across `records` under `mode`.
pub fn pool_pairs(
    loaded: &LoadedManifest,
    records: &[&UtteranceRecord],
    layer: u32,
    mode: &PairingMode,
) -> Result<PooledPairs> {
    if records.is_empty() {
        return Err(Error::insufficient("no records to pool"));
    }
    let mut za_parts = Vec::with_capacity(records.len());
    let mut zb_parts = Vec::with_capacity(records.len());
    let mut source_frames = 0usize;
    let mut masked_frames = 0usize;
    for rec in records {
        let (a, b, pairing) = match mode {
            PairingMode::Shift { frames } => {
                let plain = record_feature(loaded, rec, layer, ViewTag::Plain)?;
                let pairing = time_shift_pairing(plain.frames(), *frames)
                    .map_err(|e| record_error(rec, e.to_string()))?;
                source_frames += plain.frames();
                (plain.clone(), plain, pairing)
            }
            PairingMode::Mask {
                period,
                masked_per_period,
                positions,
            } => {
                let masked = record_feature(loaded, rec, layer, ViewTag::Masked)?;
                let unmasked = record_feature(loaded, rec, layer, ViewTag::Unmasked)?;
                if masked.frames() != unmasked.frames() {
                    return Err(record_error(
                        rec,
                        format!(
                            "masked view has {} frames but unmasked has {}",
                            masked.frames(),
                            unmasked.frames()
                        ),
                    ));
                }
                let spec = block_mask_spec(masked.frames(), *period, *masked_per_period)
                    .map_err(|e| record_error(rec, e.to_string()))?;
                let pairing = masked_pairing(&spec, *positions)
                    .map_err(|e| record_error(rec, e.to_string()))?;
                source_frames += spec.t();
                masked_frames += spec.masked_count();
                (masked, unmasked, pairing)
            }
        };
        let za_rows: Vec<usize> = pairing.pairs().iter().map(|&(t, _)| t).collect();
        let zb_rows: Vec<usize> = pairing.pairs().iter().map(|&(_, t)| t).collect();
        za_parts.push(a.values().select(Axis(0), &za_rows));
        zb_parts.push(b.values().select(Axis(0), &zb_rows));
    }
    let views = PairedViews::new(stack(za_parts)?, stack(zb_parts)?)?;
    let (mask_ratio, shift_frames) = match mode {
        PairingMode::Shift { frames } => (None, Some(*frames)),
        PairingMode::Mask { .. } => (
            Some(masked_frames as f64 / source_frames as f64),
            None,
        ),
    };
    Ok(PooledPairs {
        views,
        source_frames,
        mask_ratio,
        shift_frames,
    })
}

/// Fit and eval pools for the supervised estimator.
pub fn supervised_fit_eval(loaded: &LoadedManifest, layer: u32) -> Result<(LabeledFrames, LabeledFrames)> {
    let fit = pool_supervised(loaded, &sorted_split(loaded, SplitTag::Fit), layer)?;
    let eval = pool_supervised(loaded, &sorted_split(loaded, SplitTag::Eval), layer)?;
    if fit.labels().num_classes() != eval.labels().num_classes() {
        return Err(Error::dim_mismatch(format!(
            "fit split declares {} classes but eval declares {}",
            fit.labels().num_classes(),
            eval.labels().num_classes()
        )));
    }
    Ok((fit, eval))
}

/// Fit and eval pools for the unsupervised estimator.
pub fn pairs_fit_eval(
    loaded: &LoadedManifest,
    layer: u32,
    mode: &PairingMode,
) -> Result<(PooledPairs, PooledPairs)> {
    let fit = pool_pairs(loaded, &sorted_split(loaded, SplitTag::Fit), layer, mode)?;
    let eval = pool_pairs(loaded, &sorted_split(loaded, SplitTag::Eval), layer, mode)?;
    Ok((fit, eval))
}

/// Seed-aggregated supervised bound with `base` hyperparameters.
pub fn seeded_supervised(
    fit: &LabeledFrames,
    eval: &LabeledFrames,
    base: &ProbeConfig,
    seeds: &[u64],
) -> Result<MIEstimate> {
    run_seeded(seeds, |seed| {
        let cfg = ProbeConfig {
            seed,
            ..base.clone()
        };
        supervised_lower_bound(fit, eval, &cfg)
    })
}

/// Seed-aggregated unsupervised bound; the per-run seed drives both the
/// cluster fit and the probe.
pub fn seeded_unsupervised(
    fit: &PairedViews,
    eval: &PairedViews,
    k: usize,
    base: &ProbeConfig,
    seeds: &[u64],
) -> Result<MIEstimate> {
    run_seeded(seeds, |seed| {
        let cfg = ProbeConfig {
            seed,
            ..base.clone()
        };
        unsupervised_lower_bound(fit, eval, k, &cfg)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{
        load_manifest, store_feature_matrix, store_labels, store_manifest, FeatureEntry,
    };
    use crate::oracle::{
        export_labeled_dataset, export_view_pair_dataset, mixture_channel, sample_labeled,
        sample_view_pair, EmbeddingSpec, ExportLayout,
    };
    use crate::probe::ProbeKind;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use std::path::PathBuf;

    fn quick_cfg(seed: u64) -> ProbeConfig {
        ProbeConfig {
            kind: ProbeKind::Logistic,
            hidden_dim: 16,
            dropout_rate: 0.1,
            learning_rate: 0.1,
            epochs: 10,
            batch_size: 256,
            seed,
        }
    }

    fn labeled_fixture(dir: &std::path::Path, n: usize) -> LoadedManifest {
        let joint = mixture_channel(3, 0.9).unwrap();
        let embed = EmbeddingSpec::one_hot(3, 2.0, 0.05).unwrap();
        let fit = sample_labeled(&joint, &embed, n, 0).unwrap();
        let eval = sample_labeled(&joint, &embed, n, 1).unwrap();
        let layout = ExportLayout {
            frames_per_utterance: 40,
        };
        let path = export_labeled_dataset(&fit.frames, &eval.frames, layout, dir).unwrap();
        load_manifest(path).unwrap()
    }

    #[test]
    fn supervised_pool_matches_source_arrays() {
        let dir = tempfile::TempDir::new().unwrap();
        let joint = mixture_channel(3, 0.9).unwrap();
        let embed = EmbeddingSpec::one_hot(3, 2.0, 0.05).unwrap();
        let fit = sample_labeled(&joint, &embed, 100, 0).unwrap();
        let eval = sample_labeled(&joint, &embed, 70, 1).unwrap();
        let layout = ExportLayout {
            frames_per_utterance: 40,
        };
        let path = export_labeled_dataset(&fit.frames, &eval.frames, layout, dir.path()).unwrap();
        let loaded = load_manifest(path).unwrap();
        let (pf, pe) = supervised_fit_eval(&loaded, 0).unwrap();
        assert_eq!(pf.features().values(), fit.frames.features().values());
        assert_eq!(pf.labels(), fit.frames.labels());
        assert_eq!(pe.features().values(), eval.frames.features().values());
        assert_eq!(pe.labels(), eval.frames.labels());
    }

    #[test]
    fn pooling_is_independent_of_record_order() {
        let dir = tempfile::TempDir::new().unwrap();
        let loaded = labeled_fixture(dir.path(), 100);
        let mut shuffled = loaded.clone();
        shuffled.manifest.records.reverse();
        let (a_fit, a_eval) = supervised_fit_eval(&loaded, 0).unwrap();
        let (b_fit, b_eval) = supervised_fit_eval(&shuffled, 0).unwrap();
        assert_eq!(a_fit.features().values(), b_fit.features().values());
        assert_eq!(a_eval.labels(), b_eval.labels());
    }

    #[test]
    fn pooled_estimate_matches_direct_library_value() {
        let dir = tempfile::TempDir::new().unwrap();
        let joint = mixture_channel(3, 0.9).unwrap();
        let embed = EmbeddingSpec::one_hot(3, 2.0, 0.05).unwrap();
        let fit = sample_labeled(&joint, &embed, 400, 0).unwrap();
        let eval = sample_labeled(&joint, &embed, 400, 1).unwrap();
        let layout = ExportLayout {
            frames_per_utterance: 100,
        };
        let path = export_labeled_dataset(&fit.frames, &eval.frames, layout, dir.path()).unwrap();
        let loaded = load_manifest(path).unwrap();
        let (pf, pe) = supervised_fit_eval(&loaded, 0).unwrap();
        let pooled = seeded_supervised(&pf, &pe, &quick_cfg(0), &[0, 1]).unwrap();
        let direct = run_seeded(&[0, 1], |seed| {
            supervised_lower_bound(&fit.frames, &eval.frames, &quick_cfg(seed))
        })
        .unwrap();
        assert_eq!(pooled.value_bits.to_bits(), direct.value_bits.to_bits());
        assert_eq!(pooled.per_seed_values_bits, direct.per_seed_values_bits);
    }

    #[test]
    fn shift_pairs_take_rows_offset_by_shift() {
        let dir = tempfile::TempDir::new().unwrap();
        let values = Array2::from_shape_fn((10, 2), |(t, d)| (10 * t + d) as f32);
        let mat = FeatureMatrix::new(values.clone()).unwrap();
        store_feature_matrix(&mat, dir.path().join("u.fmat")).unwrap();
        let manifest = DatasetManifest {
            records: vec![UtteranceRecord {
                utt_id: "u".into(),
                split: SplitTag::Fit,
                frame_period_ms: 20.0,
                label_path: None,
                features: vec![FeatureEntry {
                    layer: 0,
                    view: ViewTag::Plain,
                    path: PathBuf::from("u.fmat"),
                }],
            }],
        };
        let loaded = LoadedManifest::new(manifest, dir.path());
        let records = sorted_split(&loaded, SplitTag::Fit);
        let pooled = pool_pairs(&loaded, &records, 0, &PairingMode::Shift { frames: 3 }).unwrap();
        assert_eq!(pooled.views.len(), 7);
        assert_eq!(pooled.shift_frames, Some(3));
        assert_eq!(pooled.mask_ratio, None);
        assert_eq!(pooled.source_frames, 10);
        assert_eq!(pooled.views.za().values(), &values.select(Axis(0), &[0, 1, 2, 3, 4, 5, 6]));
        assert_eq!(pooled.views.zb().values(), &values.select(Axis(0), &[3, 4, 5, 6, 7, 8, 9]));
    }

    #[test]
    fn mask_pairs_pool_masked_rows_and_report_ratio() {
        let dir = tempfile::TempDir::new().unwrap();
        let joint = mixture_channel(3, 0.9).unwrap();
        let embed = EmbeddingSpec::one_hot(3, 2.0, 0.05).unwrap();
        let fit = sample_view_pair(&joint, &embed, &embed, 80, 0).unwrap();
        let eval = sample_view_pair(&joint, &embed, &embed, 80, 1).unwrap();
        let layout = ExportLayout {
            frames_per_utterance: 40,
        };
        let path = export_view_pair_dataset(&fit.views, &eval.views, layout, dir.path()).unwrap();
        let loaded = load_manifest(path).unwrap();
        let mode = PairingMode::Mask {
            period: 40,
            masked_per_period: 30,
            positions: MaskPositions::MaskedOnly,
        };
        let (pf, pe) = pairs_fit_eval(&loaded, 0, &mode).unwrap();
        assert_eq!(pf.mask_ratio, Some(0.75));
        assert_eq!(pf.views.len(), 60);
        assert_eq!(pe.views.len(), 60);
        // Masked positions of a 40-frame utterance are rows 10..40.
        let expected_za = fit
            .views
            .za()
            .values()
            .select(Axis(0), &(10..40).chain(50..80).collect::<Vec<_>>());
        assert_eq!(pf.views.za().values(), &expected_za);
        let all = PairingMode::Mask {
            period: 40,
            masked_per_period: 30,
            positions: MaskPositions::AllFrames,
        };
        let (pa, _) = pairs_fit_eval(&loaded, 0, &all).unwrap();
        assert_eq!(pa.views.len(), 80);
        assert_eq!(pa.views.za().values(), fit.views.za().values());
        assert_eq!(pa.views.zb().values(), fit.views.zb().values());
    }

    #[test]
    fn missing_dumps_and_labels_name_the_record() {
        let dir = tempfile::TempDir::new().unwrap();
        let loaded = labeled_fixture(dir.path(), 80);
        let records = sorted_split(&loaded, SplitTag::Fit);
        let err = pool_supervised(&loaded, &records, 9).unwrap_err();
        match &err {
            Error::ManifestRecord { utt_id, .. } => assert_eq!(utt_id, "fit_0000"),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(err.to_string().contains("fit_0000"));
        let err = pool_pairs(
            &loaded,
            &records,
            0,
            &PairingMode::Mask {
                period: 40,
                masked_per_period: 30,
                positions: MaskPositions::MaskedOnly,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::ManifestRecord { .. }));

        let mut unlabeled = loaded.clone();
        for rec in &mut unlabeled.manifest.records {
            rec.label_path = None;
        }
        let records = sorted_split(&unlabeled, SplitTag::Fit);
        let err = pool_supervised(&unlabeled, &records, 0).unwrap_err();
        assert!(err.to_string().contains("no label file"));
    }

    #[test]
    fn mismatched_view_lengths_are_rejected() {
        let dir = tempfile::TempDir::new().unwrap();
        let a = FeatureMatrix::new(Array2::zeros((8, 2))).unwrap();
        let b = FeatureMatrix::new(Array2::zeros((6, 2))).unwrap();
        store_feature_matrix(&a, dir.path().join("a.fmat")).unwrap();
        store_feature_matrix(&b, dir.path().join("b.fmat")).unwrap();
        let manifest = DatasetManifest {
            records: vec![UtteranceRecord {
                utt_id: "u".into(),
                split: SplitTag::Fit,
                frame_period_ms: 20.0,
                label_path: None,
                features: vec![
                    FeatureEntry {
                        layer: 0,
                        view: ViewTag::Masked,
                        path: PathBuf::from("a.fmat"),
                    },
                    FeatureEntry {
                        layer: 0,
                        view: ViewTag::Unmasked,
                        path: PathBuf::from("b.fmat"),
                    },
                ],
            }],
        };
        let loaded = LoadedManifest::new(manifest, dir.path());
        let records = sorted_split(&loaded, SplitTag::Fit);
        let err = pool_pairs(
            &loaded,
            &records,
            0,
            &PairingMode::Mask {
                period: 4,
                masked_per_period: 2,
                positions: MaskPositions::MaskedOnly,
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("8 frames but unmasked has 6"));
    }

    #[test]
    fn label_disagreements_name_the_record() {
        let dir = tempfile::TempDir::new().unwrap();
        let mat = FeatureMatrix::new(Array2::zeros((4, 2))).unwrap();
        store_feature_matrix(&mat, dir.path().join("a.fmat")).unwrap();
        store_feature_matrix(&mat, dir.path().join("b.fmat")).unwrap();
        let la = FrameLabels::new(vec![0, 1, 0, 1], 2).unwrap();
        let lb = FrameLabels::new(vec![0, 1, 2, 0], 3).unwrap();
        store_labels(&la, dir.path().join("a.labels")).unwrap();
        store_labels(&lb, dir.path().join("b.labels")).unwrap();
        let rec = |id: &str, stem: &str| UtteranceRecord {
            utt_id: id.into(),
            split: SplitTag::Fit,
            frame_period_ms: 20.0,
            label_path: Some(PathBuf::from(format!("{stem}.labels"))),
            features: vec![FeatureEntry {
                layer: 0,
                view: ViewTag::Plain,
                path: PathBuf::from(format!("{stem}.fmat")),
            }],
        };
        let manifest = DatasetManifest {
            records: vec![rec("a", "a"), rec("b", "b")],
        };
        let loaded = LoadedManifest::new(manifest, dir.path());
        let records = sorted_split(&loaded, SplitTag::Fit);
        let err = pool_supervised(&loaded, &records, 0).unwrap_err();
        match &err {
            Error::ManifestRecord { utt_id, detail } => {
                assert_eq!(utt_id, "b");
                assert!(detail.contains("num_classes 3 disagrees with 2"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bisection_is_sorted_and_balanced() {
        let rec = |id: &str| UtteranceRecord {
            utt_id: id.into(),
            split: SplitTag::Eval,
            frame_period_ms: 20.0,
            label_path: None,
            features: vec![],
        };
        let records = vec![rec("d"), rec("b"), rec("e"), rec("a"), rec("c")];
        let (fit, eval) = bisect_records(&records).unwrap();
        let ids = |rs: &[&UtteranceRecord]| rs.iter().map(|r| r.utt_id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&fit), ["a", "b", "c"]);
        assert_eq!(ids(&eval), ["d", "e"]);
        assert!(bisect_records(&records[..1]).is_err());
        let mut mixed = records.clone();
        mixed[0].split = SplitTag::Fit;
        assert!(matches!(
            bisect_records(&mixed),
            Err(Error::InvalidConfig { .. })
        ));
    }

    #[test]
    fn layer_listing_is_sorted_and_unique() {
        let entry = |layer: u32| FeatureEntry {
            layer,
            view: ViewTag::Plain,
            path: PathBuf::from("x.fmat"),
        };
        let manifest = DatasetManifest {
            records: vec![
                UtteranceRecord {
                    utt_id: "a".into(),
                    split: SplitTag::Fit,
                    frame_period_ms: 20.0,
                    label_path: None,
                    features: vec![entry(3), entry(1)],
                },
                UtteranceRecord {
                    utt_id: "b".into(),
                    split: SplitTag::Eval,
                    frame_period_ms: 20.0,
                    label_path: None,
                    features: vec![entry(1), entry(2)],
                },
            ],
        };
        assert_eq!(layers_in_manifest(&manifest), vec![1, 2, 3]);
    }

    #[test]
    fn empty_split_reports_insufficient_data() {
        let dir = tempfile::TempDir::new().unwrap();
        let mat = FeatureMatrix::new(Array2::zeros((4, 2))).unwrap();
        store_feature_matrix(&mat, dir.path().join("a.fmat")).unwrap();
        let manifest = DatasetManifest {
            records: vec![UtteranceRecord {
                utt_id: "a".into(),
                split: SplitTag::Fit,
                frame_period_ms: 20.0,
                label_path: None,
                features: vec![FeatureEntry {
                    layer: 0,
                    view: ViewTag::Plain,
                    path: PathBuf::from("a.fmat"),
                }],
            }],
        };
        let loaded = LoadedManifest::new(manifest, dir.path());
        assert!(matches!(
            supervised_fit_eval(&loaded, 0),
            Err(Error::ManifestRecord { .. }) | Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn store_and_load_round_trip_preserves_pools() {
        let dir = tempfile::TempDir::new().unwrap();
        let loaded = labeled_fixture(dir.path(), 100);
        store_manifest(&loaded.manifest, dir.path().join("again.json")).unwrap();
        let again = load_manifest(dir.path().join("again.json")).unwrap();
        let (a, _) = supervised_fit_eval(&loaded, 0).unwrap();
        let (b, _) = supervised_fit_eval(&again, 0).unwrap();
        assert_eq!(a.features().values(), b.features().values());
    }

    #[test]
    fn dimension_disagreement_across_records_fails() {
        let dir = tempfile::TempDir::new().unwrap();
        let a = FeatureMatrix::new(Array2::zeros((4, 2))).unwrap();
        let b = FeatureMatrix::new(Array2::zeros((4, 3))).unwrap();
        store_feature_matrix(&a, dir.path().join("a.fmat")).unwrap();
        store_feature_matrix(&b, dir.path().join("b.fmat")).unwrap();
        let rec = |id: &str, stem: &str| UtteranceRecord {
            utt_id: id.into(),
            split: SplitTag::Fit,
            frame_period_ms: 20.0,
            label_path: None,
            features: vec![FeatureEntry {
                layer: 0,
                view: ViewTag::Plain,
                path: PathBuf::from(format!("{stem}.fmat")),
            }],
        };
        let manifest = DatasetManifest {
            records: vec![rec("a", "a"), rec("b", "b")],
        };
        let loaded = LoadedManifest::new(manifest, dir.path());
        let records = sorted_split(&loaded, SplitTag::Fit);
        let err = pool_pairs(&loaded, &records, 0, &PairingMode::Shift { frames: 1 }).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn seeded_wrappers_apply_each_seed() {
        let joint = mixture_channel(3, 0.9).unwrap();
        let embed = EmbeddingSpec::one_hot(3, 2.0, 0.05).unwrap();
        let fit = sample_labeled(&joint, &embed, 300, 0).unwrap();
        let eval = sample_labeled(&joint, &embed, 300, 1).unwrap();
        let agg = seeded_supervised(&fit.frames, &eval.frames, &quick_cfg(0), &[0, 1, 2]).unwrap();
        assert_eq!(agg.per_seed_values_bits.len(), 3);
        assert_eq!(agg.config.seeds, vec![0, 1, 2]);
        let mean = agg.per_seed_values_bits.iter().sum::<f64>() / 3.0;
        assert_abs_diff_eq!(agg.value_bits, mean, epsilon = 1e-12);

        let pairs = sample_view_pair(&joint, &embed, &embed, 300, 2).unwrap();
        let pairs_eval = sample_view_pair(&joint, &embed, &embed, 300, 3).unwrap();
        let agg =
            seeded_unsupervised(&pairs.views, &pairs_eval.views, 3, &quick_cfg(0), &[0, 1]).unwrap();
        assert_eq!(agg.per_seed_values_bits.len(), 2);
        assert_eq!(agg.config.k, Some(3));
    }

    #[test]
    fn single_record_shift_pool_requires_enough_frames() {
        let dir = tempfile::TempDir::new().unwrap();
        let mat = FeatureMatrix::new(Array2::zeros((3, 2))).unwrap();
        store_feature_matrix(&mat, dir.path().join("a.fmat")).unwrap();
        let manifest = DatasetManifest {
            records: vec![UtteranceRecord {
                utt_id: "a".into(),
                split: SplitTag::Fit,
                frame_period_ms: 20.0,
                label_path: None,
                features: vec![FeatureEntry {
                    layer: 0,
                    view: ViewTag::Plain,
                    path: PathBuf::from("a.fmat"),
                }],
            }],
        };
        let loaded = LoadedManifest::new(manifest, dir.path());
        let records = sorted_split(&loaded, SplitTag::Fit);
        let err = pool_pairs(&loaded, &records, 0, &PairingMode::Shift { frames: 3 }).unwrap_err();
        match err {
            Error::ManifestRecord { utt_id, .. } => assert_eq!(utt_id, "a"),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(pool_pairs(&loaded, &records, 0, &PairingMode::Shift { frames: 2 }).is_ok());
    }

    #[test]
    fn array_test_helper_shapes() {
        // Keep `array!` import exercised alongside ad-hoc constructions.
        let m = FeatureMatrix::new(array![[1.0f32, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(m.frames(), 2);
    }
}
