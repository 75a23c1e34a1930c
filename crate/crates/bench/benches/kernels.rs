use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use candle_core::DType;
use mugan_bench::{feature_batch, label_batch};
use mugan_core::params::ParamStore;
use mugan_core::{ssim, ArchConfig, AucGate, Generator, SelfAttention, VariantSpec};

fn attention(c: &mut Criterion) {
    let mut group = c.benchmark_group("attention");
    for size in [8usize, 16, 32] {
        let mut store = ParamStore::new(0, DType::F32);
        let gate = AucGate::new(&mut store.scope("gate"), 64).unwrap();
        let sa = SelfAttention::new(&mut store.scope("sa"), 64).unwrap();
        let dec = feature_batch(4, 64, size, size);
        let enc = feature_batch(4, 64, size, size);
        group.bench_with_input(BenchmarkId::new("auc_gate", size), &size, |b, _| {
            b.iter(|| gate.forward(&dec, &enc).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("self_attention", size), &size, |b, _| {
            b.iter(|| sa.forward(&enc).unwrap())
        });
    }
    group.finish();
}

fn generator(c: &mut Criterion) {
    let mut group = c.benchmark_group("generator");
    group.sample_size(10);
    for id in ["M1", "M0"] {
        let gen = Generator::new(ArchConfig::smoke(), VariantSpec::parse(id).unwrap(), 0, DType::F32).unwrap();
        let x = feature_batch(4, 3, 64, 64);
        let y = label_batch(4);
        group.bench_function(BenchmarkId::new("forward_64", id), |b| b.iter(|| gen.generate(&x, &y).unwrap()));
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let x = feature_batch(1, 3, 128, 128).squeeze(0).unwrap();
    let y = feature_batch(1, 3, 128, 128).squeeze(0).unwrap().affine(0.9, 0.01).unwrap();
    c.bench_function("ssim_128", |b| b.iter(|| ssim(&x, &y).unwrap()));
}

criterion_group!(benches, attention, generator, metrics);
criterion_main!(benches);
