use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mvfuse_core::downstream::{coxph_elasticnet_fit, PenaltyConfig};
use mvfuse_core::evaluation::concordance_index;
use mvfuse_core::integration::{ajive_fit, gfa_fit};
use mvfuse_core::synthetic::{factor_views, planted_views, PlantedConfig};
use mvfuse_core::{IntegrationConfig, Method};
use ndarray::{Array1, Array2};

fn ajive(c: &mut Criterion) {
    let mut group = c.benchmark_group("ajive");
    for n in [200, 500, 1000] {
        let data = planted_views(&PlantedConfig {
            n_samples: n,
            seed: 1,
            ..PlantedConfig::default()
        })
        .unwrap();
        let mut cfg = IntegrationConfig::new(Method::Ajive);
        cfg.per_view_ranks = Some(vec![2, 2, 2]);
        group.bench_with_input(BenchmarkId::from_parameter(n), &data.datasets, |b, views| {
            b.iter(|| ajive_fit(views, &cfg).unwrap())
        });
    }
    group.finish();
}

fn gfa(c: &mut Criterion) {
    let mut group = c.benchmark_group("gfa");
    group.sample_size(10);
    for n in [200, 500] {
        let (views, _) = factor_views(n, &[20, 30, 40], &[3.0, 2.0, 1.5], 0.3, 2).unwrap();
        let mut cfg = IntegrationConfig::new(Method::Gfa);
        cfg.max_factors = 6;
        group.bench_with_input(BenchmarkId::from_parameter(n), &views, |b, views| {
            b.iter(|| gfa_fit(views, &cfg, None).unwrap())
        });
    }
    group.finish();
}

/// Deterministic survival data with a few tied times.
fn survival_fixture(n: usize, p: usize) -> (Array2<f64>, Array1<f64>, Vec<bool>) {
    let x = Array2::from_shape_fn((n, p), |(i, j)| (((i * 31 + j * 17) % 97) as f64 / 48.5) - 1.0);
    let time = Array1::from_shape_fn(n, |i| ((-x[[i, 0]]).exp() * (1 + i % 13) as f64).round() / 4.0 + 0.25);
    let event = (0..n).map(|i| i % 4 != 0).collect();
    (x, time, event)
}

fn cox(c: &mut Criterion) {
    let mut group = c.benchmark_group("coxph");
    for n in [200, 1000] {
        let (x, time, event) = survival_fixture(n, 8);
        let names: Vec<String> = (0..8).map(|j| format!("x{j}")).collect();
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| coxph_elasticnet_fit(x.view(), time.view(), &event, &names, PenaltyConfig::new(0.02, 0.5)).unwrap())
        });
    }
    group.finish();
}

fn concordance(c: &mut Criterion) {
    let mut group = c.benchmark_group("concordance");
    for n in [1000, 10000] {
        let (x, time, event) = survival_fixture(n, 1);
        let risk = x.column(0).to_vec();
        let time = time.to_vec();
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| concordance_index(&time, &event, &risk).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, ajive, gfa, cox, concordance);
criterion_main!(benches);
