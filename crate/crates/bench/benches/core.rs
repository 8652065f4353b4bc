use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qrff_core::adaptive::{optimize_weights, OptimizerOptions};
use qrff_core::experiment::synthetic_gaussian;
use qrff_core::sequences::halton;
use qrff_core::{
    box_discrepancy_gaussian, discrepancy_gradient, gram_approx, optimize_global, transform, BoxBounds, ProductDensity,
    WeightedFeatureMap,
};

fn sequences(c: &mut Criterion) {
    let mut g = c.benchmark_group("halton");
    for &s in &[1024usize, 16384] {
        g.bench_with_input(BenchmarkId::from_parameter(s), &s, |b, &s| {
            b.iter(|| halton(black_box(s), 8, false, 1).unwrap())
        });
    }
    g.finish();
}

fn discrepancy(c: &mut Criterion) {
    let d = 4;
    let p = ProductDensity::gaussian(vec![1.0; d]).unwrap();
    let bounds = BoxBounds::uniform(2.0, d).unwrap();
    let mut g = c.benchmark_group("discrepancy");
    for &s in &[64usize, 256] {
        let freqs = transform(&halton(s, d, false, 1).unwrap(), &p).unwrap();
        g.bench_with_input(BenchmarkId::new("value", s), &freqs, |b, f| {
            b.iter(|| box_discrepancy_gaussian(black_box(f), &p, &bounds).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("gradient", s), &freqs, |b, f| {
            b.iter(|| discrepancy_gradient(black_box(f), &p, &bounds).unwrap())
        });
    }
    g.finish();
}

fn optimizers(c: &mut Criterion) {
    let p = ProductDensity::gaussian(vec![1.0, 1.0]).unwrap();
    let bounds = BoxBounds::uniform(1.0, 2).unwrap();
    let init = transform(&halton(32, 2, false, 1).unwrap(), &p).unwrap();
    let mut g = c.benchmark_group("optimize");
    g.sample_size(10);
    g.bench_function("global_s32_20iters", |b| {
        b.iter(|| optimize_global(&init, &p, &bounds, &OptimizerOptions::default().with_max_iters(20)).unwrap())
    });
    g.bench_function("weights_s32", |b| {
        b.iter(|| optimize_weights(&init, &p, &bounds).unwrap())
    });
    g.finish();
}

fn gram(c: &mut Criterion) {
    let ds = synthetic_gaussian(512, 8, 0);
    let p = ProductDensity::gaussian(vec![4.0; 8]).unwrap();
    let mut g = c.benchmark_group("gram_approx");
    g.sample_size(10);
    for &s in &[128usize, 512] {
        let map = WeightedFeatureMap::uniform(transform(&halton(s, 8, false, 1).unwrap(), &p).unwrap());
        g.bench_with_input(BenchmarkId::from_parameter(s), &map, |b, m| {
            b.iter(|| gram_approx(m, ds.x.view()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sequences, discrepancy, optimizers, gram);
criterion_main!(benches);
