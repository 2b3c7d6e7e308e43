//! Full-graph inference: cost should follow node count and ignore edges.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gssc_core::graph::generate_sbm;
use gssc_core::{Backbone, SbmParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn by_edges(c: &mut Criterion) {
    let net = Backbone::new(64, 256, 2, 5, 0.5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut group = c.benchmark_group("predict_by_edges");
    for scale in [1.0, 10.0] {
        let g = generate_sbm(&SbmParams::new(2000, 5, 0.01 * scale, 0.001 * scale, 64, 1.0, 1)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(g.n_edges()), &g, |b, g| {
            b.iter(|| net.predict_logits(black_box(g.features())).unwrap())
        });
    }
    group.finish();
}

fn by_nodes(c: &mut Criterion) {
    let net = Backbone::new(64, 256, 2, 5, 0.5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut group = c.benchmark_group("predict_by_nodes");
    for nodes in [1000, 2000, 4000] {
        let g = generate_sbm(&SbmParams::new(nodes, 5, 0.004, 0.0005, 64, 1.0, 1)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(nodes), &g, |b, g| {
            b.iter(|| net.predict_logits(black_box(g.features())).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, by_edges, by_nodes);
criterion_main!(benches);
