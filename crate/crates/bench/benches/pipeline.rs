use std::hint::black_box;

use borderforge_bench::{square_stroke, with_outliers};
use borderforge_core::extraction::{dbscan, extract_border, generate_polygon, thin, ExtractionParams};
use borderforge_core::geometry::Point2;
use borderforge_core::gridmap::integrate_border;
use borderforge_core::harness::{builtin, run_scenario, RunOptions};
use borderforge_core::interaction::Mode;
use borderforge_core::planner::Planner;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn extraction(c: &mut Criterion) {
    let params = ExtractionParams::default();
    let mut g = c.benchmark_group("extraction");
    for n in [100, 300, 1000] {
        let pts = with_outliers(square_stroke(n, 0.02, 1), n / 20, 2);
        g.bench_with_input(BenchmarkId::new("dbscan", n), &pts, |b, pts| {
            b.iter(|| dbscan(black_box(pts), params.eps, params.min_pts))
        });
        let clean = square_stroke(n, 0.02, 1);
        g.bench_with_input(BenchmarkId::new("thin", n), &clean, |b, pts| {
            b.iter(|| thin(black_box(pts), params.thin_dist))
        });
        let thinned = thin(&clean, params.thin_dist);
        g.bench_with_input(BenchmarkId::new("generate_polygon", n), &thinned, |b, pts| {
            b.iter(|| generate_polygon(black_box(pts), params.poly_dist))
        });
        let seed = [Point2::new(2.0, 2.0); 5];
        g.bench_with_input(BenchmarkId::new("extract_border", n), &pts, |b, pts| {
            b.iter(|| extract_border(black_box(pts), &seed, &params))
        });
    }
    g.finish();
}

fn maps(c: &mut Criterion) {
    let mut g = c.benchmark_group("maps");
    for name in ["builtin:1", "builtin:2", "builtin:3"] {
        let sc = builtin(name).expect("builtin");
        let prior = sc.prior().expect("prior");
        g.bench_function(BenchmarkId::new("integrate", &sc.name), |b| {
            b.iter(|| integrate_border(black_box(&prior), &sc.ground_truth_border))
        });
        g.bench_function(BenchmarkId::new("planner_new", &sc.name), |b| {
            b.iter(|| Planner::new(black_box(&prior), sc.robot.inflation))
        });
        let planner = Planner::new(&prior, sc.robot.inflation).expect("planner");
        let start = sc.robot_start.position;
        let goal = sc.strokes[0].points[0];
        g.bench_function(BenchmarkId::new("plan_to_disk", &sc.name), |b| {
            b.iter(|| planner.plan_to_disk(black_box(start), goal, 0.5))
        });
    }
    g.finish();
}

fn replay(c: &mut Criterion) {
    let mut g = c.benchmark_group("replay");
    g.sample_size(10);
    let sc = builtin("builtin:2").expect("builtin");
    for mode in [Mode::Nrs, Mode::RobotOnly] {
        g.bench_function(BenchmarkId::new("carpet-exclusion", mode), |b| {
            b.iter(|| run_scenario(&sc, RunOptions::new(mode, 0)))
        });
    }
    g.finish();
}

criterion_group!(benches, extraction, maps, replay);
criterion_main!(benches);
