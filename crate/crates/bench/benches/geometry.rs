use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use manifold_gauge::ablation::ablate;
use manifold_gauge::geometry::{analyze, base_similarity, gram_schmidt, Metric};
use manifold_gauge::prng::RowStream;
use manifold_gauge::synth::{gen_base, inject, SynthConfig};
use manifold_gauge::PatchMode;
use ndarray::Array1;
use std::hint::black_box;

fn vector(seed: u64, tag: u64, d: usize) -> Array1<f64> {
    let mut v = vec![0.0; d];
    RowStream::new(seed, tag, 0).fill_normal(&mut v, 1.0);
    Array1::from(v)
}

fn decomposition(c: &mut Criterion) {
    let mut group = c.benchmark_group("gram_schmidt");
    for d in [512usize, 3584] {
        let (x, v) = (vector(1, 1, d), vector(1, 2, d));
        group.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| {
            b.iter(|| gram_schmidt(black_box(x.view()), black_box(v.view()), &Metric::Standard).unwrap())
        });
    }
    group.finish();
}

fn matrices(c: &mut Criterion) {
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    for n in [100usize, 200] {
        let cfg = SynthConfig { n_samples: n, ..SynthConfig::default() };
        let (x, labels) = gen_base(&cfg).unwrap();
        let (xt, _) = inject(&cfg, &x, &labels).unwrap();
        group.bench_with_input(BenchmarkId::new("base_similarity", n), &n, |b, _| {
            b.iter(|| base_similarity(black_box(x.view()), &Metric::Standard).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("analyze", n), &n, |b, _| {
            b.iter(|| analyze(x.view(), xt.view(), &labels, cfg.attribute, &Metric::Standard).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("ablate", n), &n, |b, _| {
            b.iter(|| ablate(x.view(), xt.view(), &labels, cfg.attribute, &Metric::Standard, PatchMode::Direct, 0.1).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, decomposition, matrices);
criterion_main!(benches);
