use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gittins_core::{
    gittins_index, run_episode, BanditInstance, EngineConfig, IndexQuery, IndexSource, IndexTable, PolicyKind,
    PolicySpec,
};

fn index(c: &mut Criterion) {
    let cfg = EngineConfig::default();
    let mut group = c.benchmark_group("gittins_index");
    for m in [10usize, 100, 1000] {
        let q = IndexQuery::new(0.0, 1.0, m).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(m), &q, |b, q| b.iter(|| gittins_index(black_box(q), &cfg)));
    }
    group.finish();
}

fn table(c: &mut Criterion) {
    let cfg = EngineConfig::with_tol(1e-4);
    let mut group = c.benchmark_group("table_build");
    group.sample_size(10);
    for n in [50usize, 200] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| b.iter(|| IndexTable::build(n, &cfg)));
    }
    group.finish();
}

fn episode(c: &mut Criterion) {
    let horizon = 200;
    let table = IndexTable::build(horizon, &EngineConfig::with_tol(1e-4)).unwrap();
    let instance = BanditInstance::worst_case(5, 0.5, horizon).unwrap();
    let mut group = c.benchmark_group("episode_n200_k5");
    for kind in [PolicyKind::GittinsFlat, PolicyKind::Ucb, PolicyKind::Ocucb, PolicyKind::Thompson] {
        let spec = PolicySpec::flat(kind, 5, horizon).unwrap();
        let mut seed = 0u64;
        group.bench_function(kind.name(), |b| {
            b.iter(|| {
                seed += 1;
                run_episode(&instance, &spec, IndexSource::table(&table), seed)
            })
        });
    }
    group.finish();
}

criterion_group!(benches, index, table, episode);
criterion_main!(benches);
