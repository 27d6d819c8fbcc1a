use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use cchn_core::conflict::build_conflict_graph;
use cchn_core::derive_links;
use cchn_core::harness::{generate_grid_scenario, toy_scenario, GridConfig};
use cchn_core::llc::{llc_throughput, LlcConfig};
use cchn_core::mis::{enumerate_all_mis, search, MisMode};
use cchn_core::nlc::{build_lp, select_control_interval, NlcSolver};
use cchn_core::scaling::{monte_carlo_tail, simulate_dest_load, ScalingParams};

fn grid() -> cchn_core::Scenario {
    generate_grid_scenario(&GridConfig::default()).unwrap()
}

fn conflict_graph(c: &mut Criterion) {
    let sc = grid();
    c.bench_function("grid_links_and_graph", |b| {
        b.iter(|| {
            let links = derive_links(black_box(&sc));
            build_conflict_graph(&sc, &links)
        })
    });
}

fn mis_search(c: &mut Criterion) {
    let sc = grid();
    let g = build_conflict_graph(&sc, &derive_links(&sc));
    let mut group = c.benchmark_group("mis");
    group.bench_function("grid_sio", |b| {
        b.iter(|| search(&sc, &g, MisMode::Sio, black_box(30), 1).unwrap())
    });
    group.bench_function("grid_augmented", |b| {
        b.iter(|| search(&sc, &g, MisMode::Augmented, black_box(30), 1).unwrap())
    });
    let toy = toy_scenario(10.0, 1e6);
    let tg = build_conflict_graph(&toy, &derive_links(&toy));
    group.bench_function("toy_exact", |b| {
        b.iter(|| enumerate_all_mis(black_box(&tg), 40).unwrap())
    });
    group.finish();
}

fn lp_solve(c: &mut Criterion) {
    let sc = grid();
    let g = build_conflict_graph(&sc, &derive_links(&sc));
    let mis = search(&sc, &g, MisMode::Augmented, 30, 1).unwrap();
    let ci = select_control_interval(&sc, &g).unwrap();
    let program = build_lp(&sc, &g, &mis, &ci, &[true; 5]).unwrap();
    let mut group = c.benchmark_group("lp");
    group.sample_size(10);
    group.bench_function("grid_all_sessions", |b| {
        b.iter(|| program.lp.solve(1e-9).unwrap())
    });
    group.finish();
}

fn nlc_solve(c: &mut Criterion) {
    let toy = toy_scenario(10.0, 1e6);
    let g = build_conflict_graph(&toy, &derive_links(&toy));
    let mis = enumerate_all_mis(&g, 40).unwrap();
    c.bench_function("nlc_toy", |b| {
        b.iter(|| {
            NlcSolver::default()
                .solve(black_box(&toy), &g, &mis)
                .unwrap()
        })
    });
}

fn baseline(c: &mut Criterion) {
    let sc = grid();
    let cfg = LlcConfig::from_scenario(&sc);
    c.bench_function("llc_grid", |b| {
        b.iter(|| llc_throughput(black_box(&sc), &cfg, 30.0).unwrap())
    });
}

fn scaling(c: &mut Criterion) {
    let mut group = c.benchmark_group("scaling");
    group.sample_size(10);
    group.bench_function("tail_1e5", |b| {
        b.iter(|| monte_carlo_tail(1000, 0.1, black_box(0.3), 100_000, 7).unwrap())
    });
    let p = ScalingParams::new(1e4, 0.6, 0.3, 1.0).unwrap();
    group.bench_function("dest_load_n1e4", |b| {
        b.iter(|| simulate_dest_load(black_box(&p), 20, 7).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    conflict_graph,
    mis_search,
    lp_solve,
    nlc_solve,
    baseline,
    scaling
);
criterion_main!(benches);
