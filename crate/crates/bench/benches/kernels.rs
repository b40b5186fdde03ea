use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use laneforge_core::kernels::{
    bvat_fuse, cross_attention, sfwa_aggregate, AttentionParams, BvatParams, FeatureMatrix,
    SfwaInput, SfwaParams,
};
use laneforge_core::metrics::{chamfer_unilateral, hungarian};
use laneforge_core::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|_| Vec3::new(rng.random_range(0.0..50.0), rng.random_range(-10.0..10.0), rng.random_range(-2.0..0.0)))
        .collect()
}

fn kernels(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut g = c.benchmark_group("hungarian");
    for n in [8usize, 32, 128] {
        let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &cost, |b, cost| {
            b.iter(|| hungarian(black_box(cost)).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("chamfer");
    for n in [100usize, 1000] {
        let (a, b_pts) = (points(&mut rng, n), points(&mut rng, n));
        g.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| chamfer_unilateral(black_box(&a), black_box(&b_pts)).unwrap())
        });
    }
    g.finish();

    let q = FeatureMatrix::random(256, 64, 1.0, &mut rng);
    let kv = FeatureMatrix::random(512, 32, 1.0, &mut rng);
    let ap = AttentionParams::random(64, 32, 32, &mut rng);
    c.bench_function("cross_attention_256x512", |b| {
        b.iter(|| cross_attention(black_box(&q), &kv, &kv, &ap).unwrap())
    });

    // Fusion pairs BEV and spatial tokens one to one.
    let sp = FeatureMatrix::random(256, 32, 1.0, &mut rng);
    let bp = BvatParams::random(64, 32, 32, 32, &mut rng);
    c.bench_function("bvat_fuse_256", |b| b.iter(|| bvat_fuse(black_box(&q), &sp, &bp).unwrap()));

    let input = SfwaInput {
        blocks: (0..3).map(|_| FeatureMatrix::random(16, 32, 1.0, &mut rng)).collect(),
    };
    let wp = SfwaParams::random(32, 64, 64, &mut rng);
    c.bench_function("sfwa_aggregate_k16", |b| b.iter(|| sfwa_aggregate(black_box(&input), &wp).unwrap()));
}

criterion_group!(benches, kernels);
criterion_main!(benches);
