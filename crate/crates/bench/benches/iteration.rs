use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use witsen_core::optimizer::{
    converge_inner, delta_for, distortion_profile, mirrored_counts, sample_source, update_inner, update_outer,
    IterationState,
};
use witsen_core::{total_cost, Grid, OuterPolicy, ProblemParams, QuadratureConfig};

const SIGMA: f64 = 5.0;

/// A state a few iterations into the k = 0.2 stage, so the policies have structure.
fn warm_state(len: usize, n: usize) -> IterationState {
    let grid = Grid::new(len, delta_for(len, SIGMA)).unwrap();
    let mut s = IterationState::new(sample_source(n, SIGMA, 0).unwrap(), OuterPolicy::zeros(grid), 8.0).unwrap();
    for k in [3.0, 1.0, 0.4, 0.2] {
        converge_inner(&mut s, k, 1e-4, 20).unwrap();
    }
    s
}

fn hot_loops(c: &mut Criterion) {
    let mut group = c.benchmark_group("iteration");
    group.sample_size(20);
    for len in [201usize, 801, 3201] {
        let s = warm_state(len, 100_000);
        group.bench_with_input(BenchmarkId::new("distortion_profile", len), &s, |b, s| {
            b.iter(|| distortion_profile(black_box(&s.outer), &s.channel).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("update_inner", len), &s, |b, s| {
            b.iter(|| update_inner(black_box(&s.samples), &s.distortion, 0.2, &s.grid).unwrap())
        });
        let weights = mirrored_counts(&s.counts, &s.grid);
        group.bench_with_input(BenchmarkId::new("update_outer", len), &s, |b, s| {
            b.iter(|| update_outer(black_box(&weights), &s.channel, &s.outer).unwrap())
        });
        let t = s.thresholds().unwrap();
        let params = ProblemParams::new(0.2, SIGMA).unwrap();
        let q = QuadratureConfig::default();
        group.bench_with_input(BenchmarkId::new("total_cost", len), &s, |b, s| {
            b.iter(|| total_cost(black_box(&t), &s.outer, &params, &q).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, hot_loops);
criterion_main!(benches);
