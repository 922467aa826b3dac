use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use std::f64::consts::PI;

use zakai_core::filtering::{particle_filter, simulate_scenario, ObservationModel, ParticleConfig};
use zakai_core::random_measure::{sample_stable_increment, MarkSpace};
use zakai_core::solver::{solve_cauchy, InputData, MarkSource, Source};
use zakai_core::{Execution, FrequencyGrid, StableModel};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn stable_sampler(c: &mut Criterion) {
    let model = StableModel::isotropic(1.5, 1, 0.5, 1.0).unwrap();
    let mut group = c.benchmark_group("stable_increment_20k");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sample_stable_increment(&model, 0.0, 1.0, 20_000, 7, None, exec).unwrap())
        });
    }
    group.finish();
}

fn cauchy_ensemble(c: &mut Criterion) {
    let model = StableModel::isotropic(1.5, 1, 0.5, 1.0).unwrap();
    let grid = FrequencyGrid::new(1, 128, PI).unwrap();
    let space = MarkSpace::atoms(&[(1.0, 2.0), (-0.5, 2.0)]).unwrap();
    let mut input = InputData::new(model, grid, space);
    input.lambda = 1.0;
    input.f = Some(Source::stationary(|x| x[0].cos()));
    input.g = Some(MarkSource::stationary(|x, m| m.value * x[0].sin()));
    input.snapshots = vec![0.5, 1.0];
    input.paths = 256;
    let mut group = c.benchmark_group("solve_cauchy_256_paths");
    group.sample_size(10);
    for (name, exec) in MODES {
        let mut inp = input.clone();
        inp.exec = exec;
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| solve_cauchy(black_box(inp.clone())).unwrap()));
    }
    group.finish();
}

fn particle_ensemble(c: &mut Criterion) {
    let model = StableModel::isotropic(1.5, 1, 0.5, 1.0).unwrap();
    let grid = FrequencyGrid::new(1, 256, 8.0).unwrap();
    let u0 = ObservationModel::gaussian_initial(&grid, [0.0, 0.0], 0.5);
    let obs = ObservationModel::new(&grid, &[(-4.0, 2.0), (4.0, 2.0)], |x, y| 1.0 + 0.8 * ((x[0] - y) * PI / 8.0).cos(), u0)
        .unwrap();
    let scenario = simulate_scenario(&model, &obs, 1e-2, 11).unwrap();
    let mut group = c.benchmark_group("particle_filter_2k");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = ParticleConfig {
            particles: 2000,
            dt_max: 2e-2,
            snapshots: vec![0.5, 1.0],
            seed: 3,
            exec,
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| particle_filter(&scenario.events, &obs, &model, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, stable_sampler, cauchy_ensemble, particle_ensemble);
criterion_main!(benches);
