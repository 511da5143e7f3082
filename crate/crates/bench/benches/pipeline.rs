use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use epp_bench::Fixture;
use epp_core::inference::{rank_users, InferenceStats};
use epp_core::pipeline::{ForecastConfig, StatsBundle, StatsConfig};
use epp_core::training::batch_loss;
use epp_core::{BackboneKind, InterventionMode, Scorer};

fn popstats(c: &mut Criterion) {
    let f = Fixture::new();
    let cfg = StatsConfig {
        window_steps: Some(10),
        ..Default::default()
    };
    c.bench_function("popstats/build", |b| {
        b.iter(|| StatsBundle::build(black_box(&f.ds), &cfg).unwrap())
    });
    c.bench_function("forecast/plan", |b| {
        b.iter(|| f.stats.plan(black_box(&f.ds), &ForecastConfig::default()))
    });
}

fn loss(c: &mut Criterion) {
    let f = Fixture::new();
    let mf = f.model(BackboneKind::Mf, 0);
    let gcn = f.model(BackboneKind::LightGcn, 2);
    c.bench_function("batch_loss/mf", |b| {
        b.iter(|| batch_loss(&mf, None, black_box(&f.batch), &f.ctx, &f.cfg))
    });
    c.bench_function("batch_loss/lightgcn2", |b| {
        b.iter(|| batch_loss(&gcn, Some(&f.graph), black_box(&f.batch), &f.ctx, &f.cfg))
    });
}

fn scoring(c: &mut Criterion) {
    let f = Fixture::new();
    let params = f.model(BackboneKind::Mf, 0);
    let scorer = Scorer::new(&params, None, f.cfg.scoring_rule());
    let inf = InferenceStats::from_tables(&f.stats.pop, &f.stats.pers, &f.ds.grid);
    let plan = f.stats.plan(&f.ds, &ForecastConfig::default());
    let users: Vec<usize> = (0..f.ds.num_users).collect();
    let train_items = f.ds.train_items_by_user();
    c.bench_function("rank_users/intervened", |b| {
        b.iter(|| {
            rank_users(
                &scorer,
                &inf,
                InterventionMode::Intervened,
                Some(&plan),
                black_box(&users),
                &train_items,
                20,
            )
        })
    });
}

criterion_group!(benches, popstats, loss, scoring);
criterion_main!(benches);
