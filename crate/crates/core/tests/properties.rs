use std::f64::consts::PI;

use proptest::prelude::*;
use zakai_core::filtering::{reference_observations, zakai_solve, ObservationModel};
use zakai_core::kernel::{density_g, SymbolGrid};
use zakai_core::lp_norms::fractional_derivative;
use zakai_core::random_measure::{compensated_integral, sample_prm, sample_stable_increment, Compensator, Mark, MarkSpace};
use zakai_core::solver::{InputData, MarkSource, Solver, Source};
use zakai_core::{check_assumptions, Error, AngularMeasure, Coefficients, Execution, FrequencyGrid, SpectralField, StableModel};

fn skewed_model(alpha: f64, left: f64, right: f64) -> StableModel {
    let m = AngularMeasure::tabulated(1, &[left, right]).unwrap();
    StableModel::builder(alpha, 1).horizon(2.0).coefficients(Coefficients::new(m)).build().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn kernel_semigroup(alpha in 0.3f64..2.0, s in 0.0f64..0.3, a in 0.01f64..0.4, b in 0.01f64..0.4, lambda in 0.0f64..3.0) {
        let model = skewed_model(alpha.min(1.99), 0.3, 0.9);
        let grid = FrequencyGrid::new(1, 64, 6.0).unwrap();
        let symbols = SymbolGrid::new(&model, &grid, Execution::Sequential).unwrap();
        let (r, t) = (s + a, s + a + b);
        let left = symbols.kernel_values(s, r, lambda);
        let right = symbols.kernel_values(r, t, lambda);
        let whole = symbols.kernel_values(s, t, lambda);
        for ((x, y), z) in left.iter().zip(&right).zip(&whole) {
            prop_assert!((x * y - z).norm() <= 1e-12);
        }
    }

    #[test]
    fn density_is_real_normalized_and_nonnegative(alpha in 1.0f64..1.95, left in 0.2f64..1.0, right in 0.2f64..1.0, t in 0.5f64..2.0) {
        let model = if alpha == 1.0 { skewed_model(1.0, left, left) } else { skewed_model(alpha, left, right) };
        let grid = FrequencyGrid::new(1, 1024, 40.0).unwrap();
        let g = match density_g(&model, 0.0, t, &grid) {
            Err(Error::Resolution { n, half_width, .. }) => density_g(&model, 0.0, t, &FrequencyGrid::new(1, n, half_width).unwrap()),
            other => other,
        };
        let d = g.unwrap().diagnostics.unwrap();
        prop_assert!(d.max_imag <= 1e-10);
        prop_assert!((d.mass - 1.0).abs() <= 1e-6);
        prop_assert!(d.min_value >= -1e-6);
    }

    #[test]
    fn mu_hat_scales_with_density(s in 0.05f64..20.0, alpha in 0.2f64..1.95) {
        let base = AngularMeasure::from_density(2, 64, |w| 1.0 + 0.5 * w[0] * w[1]).unwrap();
        let m1 = StableModel::builder(alpha, 2).coefficients(Coefficients::new(base.clone())).build().unwrap();
        let m2 = StableModel::builder(alpha, 2).coefficients(Coefficients::new(base.scaled(s))).build().unwrap();
        let (r1, r2) = (check_assumptions(&m1, 32).mu_hat, check_assumptions(&m2, 32).mu_hat);
        prop_assert!((r2 - s * r1).abs() <= 1e-12 * r2.abs().max(1.0));
    }

    #[test]
    fn fractional_derivative_eigenfunctions(k in 1usize..20, alpha in 0.1f64..2.0) {
        let grid = FrequencyGrid::new(1, 64, PI).unwrap();
        let u = SpectralField::from_fn(&grid, |x| (k as f64 * x[0]).cos());
        let d = fractional_derivative(&grid, &u, alpha).unwrap();
        let expected = u.scaled((k as f64).powf(alpha));
        prop_assert!(d.axpy(-1.0, &expected).unwrap().sup_norm() <= 1e-10 * (k as f64).powf(alpha).max(1.0));
    }

    #[test]
    fn compensated_integral_is_linear_in_the_integrand(seed in any::<u64>(), a in -3.0f64..3.0) {
        let space = MarkSpace::atoms(&[(1.0, 3.0), (-2.0, 1.0)]).unwrap().with_continuous(0.0, 1.0, 2.0).unwrap();
        let path = sample_prm(&space, 1.0, seed).unwrap();
        let g1 = |t: f64, m: &Mark| m.value * (1.0 + t);
        let g2 = |t: f64, m: &Mark| (3.0 * t).sin() + m.value * m.value;
        let q1 = compensated_integral(&path, g1, Compensator::Nodes(16)).unwrap();
        let q2 = compensated_integral(&path, g2, Compensator::Nodes(16)).unwrap();
        let q = compensated_integral(&path, |t, m: &Mark| a * g1(t, m) + g2(t, m), Compensator::Nodes(16)).unwrap();
        for k in 0..=8 {
            let t = k as f64 / 8.0;
            let lhs = q.value_at(t);
            let rhs = a * q1.value_at(t) + q2.value_at(t);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn prm_paths_are_reproducible_and_ordered(seed in any::<u64>(), horizon in 0.1f64..3.0) {
        let space = MarkSpace::atoms(&[(1.0, 4.0)]).unwrap();
        let a = sample_prm(&space, horizon, seed).unwrap();
        let b = sample_prm(&space, horizon, seed).unwrap();
        prop_assert_eq!(&a.events, &b.events);
        prop_assert!(a.events.windows(2).all(|w| w[0].0 <= w[1].0));
        prop_assert!(a.events.iter().all(|(t, _)| *t >= 0.0 && *t <= horizon));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn solver_is_linear_per_path(a in -3.0f64..3.0, path in 0usize..50, lambda in 0.0f64..4.0) {
        let model = StableModel::isotropic(1.3, 1, 0.5, 1.0).unwrap();
        let grid = FrequencyGrid::new(1, 64, PI).unwrap();
        let space = MarkSpace::atoms(&[(1.0, 2.0), (-0.5, 3.0)]).unwrap();
        let mut input = InputData::new(model, grid, space);
        input.lambda = lambda;
        input.snapshots = vec![0.3, 1.0];
        let f1 = Source::stationary(|x| x[0].cos());
        let f2 = Source::stationary(|x| (2.0 * x[0]).sin());
        let g1 = MarkSource::stationary(|x, m| m.value * (3.0 * x[0]).cos());
        let g2 = MarkSource::stationary(|x, m| 1.0 + m.value * x[0].sin());
        let run = |f: Source, g: MarkSource| {
            let mut inp = input.clone();
            inp.f = Some(f);
            inp.g = Some(g);
            Solver::new(inp).unwrap().solve_path(path).unwrap().snapshots
        };
        let lhs = run(Source::combine(a, &f1, 1.0, &f2), MarkSource::combine(a, &g1, 1.0, &g2));
        let u1 = run(f1.clone(), g1.clone());
        let u2 = run(f2.clone(), g2.clone());
        for k in 0..lhs.len() {
            let rhs = u1[k].scaled(a).axpy(1.0, &u2[k]).unwrap();
            prop_assert!(lhs[k].axpy(-1.0, &rhs).unwrap().sup_norm() <= 1e-10 * rhs.sup_norm().max(1.0));
        }
    }

    #[test]
    fn sampler_is_independent_of_execution_mode(seed in any::<u64>(), alpha in 0.5f64..2.0) {
        let model = StableModel::isotropic(alpha, 1, 0.5, 1.0).unwrap();
        let a = sample_stable_increment(&model, 0.0, 0.5, 500, seed, None, Execution::Sequential).unwrap();
        let b = sample_stable_increment(&model, 0.0, 0.5, 500, seed, None, Execution::Parallel).unwrap();
        prop_assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn zakai_density_stays_nonnegative(amplitude in 0.0f64..0.9, seed in any::<u64>()) {
        let model = StableModel::isotropic(1.5, 1, 0.5, 1.0).unwrap();
        let grid = FrequencyGrid::new(1, 256, 8.0).unwrap();
        let u0 = ObservationModel::gaussian_initial(&grid, [0.0, 0.0], 0.5);
        let obs = ObservationModel::new(&grid, &[(-3.0, 3.0), (3.0, 3.0)], move |x, y| 1.0 + amplitude * ((x[0] - y) * PI / 8.0).cos(), u0).unwrap();
        let events = reference_observations(&obs, 1.0, seed).unwrap();
        let run = zakai_solve(&events, &obs, &model, 1e-2, &[0.25, 0.5, 1.0]).unwrap();
        for (snap, density) in run.snapshots.iter().zip(&run.densities) {
            prop_assert!(snap.min_value >= -1e-6);
            let mass: f64 = density.iter().sum::<f64>() * grid.spacing();
            prop_assert!((mass - 1.0).abs() <= 1e-10);
        }
    }
}
