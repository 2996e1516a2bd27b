//! Throughput benchmarks for the hot paths: quantizer fitting, probe
//! training, entropy tallying, and feature-dump IO.

use criterion::{criterion_group, criterion_main, Criterion};
use miprobe_core::cluster::fit_kmeans;
use miprobe_core::datamodel::{load_feature_matrix, store_feature_matrix};
use miprobe_core::mi::{empirical_entropy_bits, LabeledFrames};
use miprobe_core::oracle::{mixture_channel, sample_labeled, EmbeddingSpec};
use miprobe_core::probe::{train_probe, ProbeConfig, ProbeKind};

fn labeled(n_frames: usize, num_symbols: usize, seed: u64) -> LabeledFrames {
    let joint = mixture_channel(num_symbols, 1.0).unwrap();
    let embed = EmbeddingSpec::one_hot(num_symbols, 4.0, 0.2).unwrap();
    sample_labeled(&joint, &embed, n_frames, seed).unwrap().frames
}

fn probe_config(kind: ProbeKind) -> ProbeConfig {
    ProbeConfig {
        kind,
        hidden_dim: 128,
        dropout_rate: 0.1,
        learning_rate: 0.1,
        epochs: 1,
        batch_size: 256,
        seed: 0,
    }
}

fn bench_kmeans(c: &mut Criterion) {
    let frames = labeled(2000, 8, 1);
    let data = frames.features().values().mapv(f64::from);
    c.bench_function("kmeans_fit_2000x8_k20", |b| {
        b.iter(|| fit_kmeans(data.view(), 20, 100, 0).unwrap())
    });
}

fn bench_probe_epoch(c: &mut Criterion) {
    let frames = labeled(2000, 8, 2);
    for kind in [ProbeKind::Logistic, ProbeKind::Mlp] {
        let cfg = probe_config(kind);
        c.bench_function(&format!("train_{kind}_epoch_2000x8"), |b| {
            b.iter(|| train_probe(frames.features(), frames.labels(), &cfg).unwrap())
        });
    }
}

fn bench_entropy(c: &mut Criterion) {
    let ids: Vec<u32> = (0..1_000_000u32).map(|i| (i * 2_654_435_761) % 50).collect();
    c.bench_function("entropy_1m_ids_k50", |b| {
        b.iter(|| empirical_entropy_bits(&ids, 50).unwrap())
    });
}

fn bench_fmat_io(c: &mut Criterion) {
    let frames = labeled(1000, 8, 3);
    let dir = tempfile::TempDir::new().unwrap();
    let path = dir.path().join("bench.fmat");
    c.bench_function("fmat_store_load_1000x8", |b| {
        b.iter(|| {
            store_feature_matrix(frames.features(), &path).unwrap();
            load_feature_matrix(&path).unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_kmeans, bench_probe_epoch, bench_entropy, bench_fmat_io
}
criterion_main!(benches);
