use std::hint::black_box;

use catenc_bench::signal_table;
use catenc_core::cart::grow_and_prune;
use catenc_core::glmm::{fit_binomial_ranint, fit_gaussian_ranint};
use catenc_core::{EncoderSpec, FittedPipeline, Strategy, TaskKind};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn pipelines(c: &mut Criterion) {
    let table = signal_table(3000, 200, TaskKind::Binary, 1);
    let mut group = c.benchmark_group("pipeline_fit");
    group.sample_size(10);
    for strategy in Strategy::ALL {
        let spec = EncoderSpec::new(strategy, 25);
        group.bench_with_input(BenchmarkId::from_parameter(strategy), &spec, |b, spec| {
            b.iter(|| FittedPipeline::fit(black_box(&table), spec).unwrap())
        });
    }
    let cv = EncoderSpec::new(Strategy::Glmm, 25).with_folds(5);
    group.bench_function("glmm_5cv", |b| b.iter(|| FittedPipeline::fit(black_box(&table), &cv).unwrap()));
    group.finish();
}

fn mixed_models(c: &mut Criterion) {
    let reg = signal_table(3000, 200, TaskKind::Regression, 2);
    let bin = signal_table(3000, 200, TaskKind::Binary, 2);
    let mut group = c.benchmark_group("random_intercept");
    group.sample_size(20);
    group.bench_function("gaussian", |b| {
        b.iter(|| fit_gaussian_ranint(reg.column("x").unwrap(), reg.target()).unwrap())
    });
    group.bench_function("binomial", |b| {
        b.iter(|| fit_binomial_ranint(bin.column("x").unwrap(), bin.target(), "pos").unwrap())
    });
    group.finish();
}

fn level_tree(c: &mut Criterion) {
    let table = signal_table(3000, 200, TaskKind::Multiclass(3), 3);
    c.bench_function("cart_multiclass_200_levels", |b| {
        b.iter(|| grow_and_prune(table.column("x").unwrap(), table.target(), table.task(), 7).unwrap())
    });
}

criterion_group!(benches, pipelines, mixed_models, level_tree);
criterion_main!(benches);
