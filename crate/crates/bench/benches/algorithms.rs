use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use exportshock::counterfactual::effects;
use exportshock::ensemble::nnls_normal;
use exportshock::heterogeneity::{fit_effect_tree, EffectFrame, TreeParams, TREE_VARIABLES};
use exportshock::metrics::{average_precision, evaluate, roc_auc};
use exportshock::models::{fit, ClassifierSpec, ModelKind};
use exportshock_bench::{panels, scored};

fn metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("metrics");
    for n in [1_000, 100_000] {
        let (scores, labels) = scored(n);
        group.bench_with_input(BenchmarkId::new("roc_auc", n), &n, |b, _| {
            b.iter(|| roc_auc(black_box(&scores), black_box(&labels)))
        });
        group.bench_with_input(BenchmarkId::new("average_precision", n), &n, |b, _| {
            b.iter(|| average_precision(black_box(&scores), black_box(&labels)))
        });
        group.bench_with_input(BenchmarkId::new("report", n), &n, |b, _| {
            b.iter(|| evaluate(black_box(&scores), black_box(&labels), 0.5).unwrap())
        });
    }
    group.finish();
}

fn models(c: &mut Criterion) {
    let (train, _) = panels(1_000, 4);
    let y = train.outcomes();
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    for kind in ModelKind::ALL {
        let spec = ClassifierSpec::default_for(kind, 1);
        group.bench_function(kind.as_str(), |b| b.iter(|| fit(&spec, black_box(&train.design), &y).unwrap()));
    }
    group.finish();
}

fn nnls(c: &mut Criterion) {
    let m = 6;
    // Gram matrix of six correlated columns.
    let g: Vec<f64> = (0..m * m).map(|k| if k / m == k % m { 1.0 } else { 0.6 }).collect();
    let rhs = [0.9, 0.7, 0.65, 0.5, 0.8, 0.3];
    c.bench_function("nnls_normal/6", |b| b.iter(|| nnls_normal(black_box(&g), black_box(&rhs), m)));
}

fn tree(c: &mut Criterion) {
    let (_, aware) = panels(2_000, 4);
    let treated = aware.shock_unaware();
    let (score, _) = scored(treated.len());
    let y_sum: Vec<f64> = score.iter().map(|s| 0.2 + 0.6 * s).collect();
    let y_sam: Vec<f64> = y_sum.iter().zip(&treated.rows).map(|(p, r)| p - if r.success { 0.0 } else { 0.15 }).collect();
    let table = effects(&y_sum, &y_sam, &treated.rows.iter().map(|r| r.firm_id.clone()).collect::<Vec<_>>(), 4).unwrap();
    let frame = EffectFrame::join(&table, std::slice::from_ref(&treated)).unwrap();
    let params = TreeParams::default();
    c.bench_function("effect_tree", |b| b.iter(|| fit_effect_tree(black_box(&frame), &TREE_VARIABLES, &params).unwrap()));
}

fn featurize(c: &mut Criterion) {
    let mut group = c.benchmark_group("featurize");
    group.sample_size(10);
    group.bench_function("generate_and_build/1000", |b| b.iter(|| panels(black_box(1_000), 4)));
    group.finish();
}

criterion_group!(benches, metrics, models, nnls, tree, featurize);
criterion_main!(benches);
