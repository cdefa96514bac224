use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use srmon_core::alm::{AlmModel, Portfolio};
use srmon_core::esg::MarketState;
use srmon_core::par::ExecMode;
use srmon_core::transitions::{FactorKind, FactorSet, RiskFactorDef, RiskFactorVector};

fn desk_model() -> AlmModel {
    let desk = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../desk");
    let portfolio = Portfolio::load(&desk.join("portfolio.toml")).unwrap();
    let market: MarketState = toml::from_str(&std::fs::read_to_string(desk.join("market.toml")).unwrap()).unwrap();
    let factors = FactorSet::new(vec![
        RiskFactorDef::new("stock", FactorKind::StockLevel, "stock"),
        RiskFactorDef::new("rate", FactorKind::RateLevel, "rate"),
    ])
    .unwrap();
    AlmModel::new(portfolio, market, factors, 20).unwrap()
}

fn nav_batch(c: &mut Criterion) {
    let alm = desk_model();
    let transitions: Vec<RiskFactorVector> = (0..64)
        .map(|i| {
            let x = i as f64 / 63.0 - 0.5;
            RiskFactorVector::new(vec![0.4 * x, -0.01 * x]).unwrap()
        })
        .collect();
    let mut group = c.benchmark_group("nav_responses_64x1");
    group.sample_size(20);
    for (name, mode) in [("parallel", ExecMode::Parallel), ("sequential", ExecMode::Sequential)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| alm.nav_responses(&transitions, None, 1, 11, mode).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("nav_estimate_2000");
    group.sample_size(10);
    let zero = RiskFactorVector::new(vec![0.0, 0.0]).unwrap();
    for (name, mode) in [("parallel", ExecMode::Parallel), ("sequential", ExecMode::Sequential)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| alm.nav_estimate(&zero, None, 2000, 11, 0, mode).unwrap().mean)
        });
    }
    group.finish();
}

criterion_group!(benches, nav_batch);
criterion_main!(benches);
