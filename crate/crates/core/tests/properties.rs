mod common;

use common::{finite_difference, random_config, random_rho, relative_gap, rng, tight};
use detbeam::fixed_point::{outer_map, solve_fundamental, solve_gbar_inner, solve_gbar_inner_from, SolverOptions};
use detbeam::metrics::{evaluate, mutual_information_at};
use detbeam::montecarlo::{sample_haar_columns, trial_rng};
use detbeam::power_allocation::{mutual_information_gradient, waterfill_sum, WaterfillOptions};
use detbeam::scenario::ScenarioConfig;
use proptest::prelude::*;
use rand::Rng;

/// Random small instance plus a noise power, both derived from `seed`.
fn instance(seed: u64, max_k: usize, max_n: usize, max_tx: usize) -> (ScenarioConfig, f64, rand_chacha::ChaCha8Rng) {
    let mut r = rng(seed);
    let config = random_config(&mut r, max_k, max_n, max_tx);
    let rho = random_rho(&mut r);
    (config, rho, r)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn trace_identity_and_bound(seed in any::<u64>()) {
        let (config, rho, _) = instance(seed, 3, 8, 6);
        let sol = solve_fundamental(&config, rho, &SolverOptions::default()).unwrap();
        prop_assert!((sol.trace_identity(&config).unwrap() - 1.0).abs() <= 1e-6);
        for k in 0..config.num_transmitters() {
            prop_assert!(sol.gbar[k] >= 0.0);
            prop_assert!(sol.g[k] * sol.gbar[k] < config.c(k) * config.cbar(k));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn outer_map_is_standard(seed in any::<u64>()) {
        let (config, rho, mut r) = instance(seed, 3, 8, 4);
        let opts = tight();
        let k_count = config.num_transmitters();
        let x: Vec<f64> = (0..k_count).map(|_| r.random_range(0.05..2.0)).collect();
        let larger: Vec<f64> = x.iter().map(|v| v * r.random_range(1.1..2.0)).collect();
        let h = outer_map(&config, &x, rho, &opts).unwrap();
        let h_larger = outer_map(&config, &larger, rho, &opts).unwrap();
        for k in 0..k_count {
            prop_assert!(h[k] > 1e-12);
            prop_assert!(h_larger[k] - h[k] > 1e-12, "monotonicity: {} vs {}", h_larger[k], h[k]);
        }
        for alpha in [1.5, 2.0, 4.0] {
            let scaled: Vec<f64> = x.iter().map(|v| alpha * v).collect();
            let h_scaled = outer_map(&config, &scaled, rho, &opts).unwrap();
            for k in 0..k_count {
                prop_assert!(alpha * h[k] - h_scaled[k] > 1e-12, "scalability at alpha = {alpha}");
            }
        }
    }

    #[test]
    fn derivative_matches_finite_differences(seed in any::<u64>()) {
        let (config, rho, mut r) = instance(seed, 3, 6, 4);
        let sol = solve_fundamental(&config, rho, &tight()).unwrap();
        let grad = mutual_information_gradient(&config, &sol);
        let k = r.random_range(0..config.num_transmitters());
        let j = r.random_range(0..config.transmitter(k).n_streams());
        let fd = finite_difference(&config, rho, k, j, 1e-5);
        prop_assert!(relative_gap(fd, grad[k][j]) <= 1e-4, "fd {fd} vs {}", grad[k][j]);
        prop_assert!(grad[k][j] > 0.0);
    }

    #[test]
    fn mutual_information_is_concave_in_each_power(seed in any::<u64>()) {
        let (config, rho, mut r) = instance(seed, 3, 6, 4);
        let k = r.random_range(0..config.num_transmitters());
        let j = r.random_range(0..config.transmitter(k).n_streams());
        let step = 1e-2;
        let at = |d: f64| {
            let mut p = config.powers();
            p[k][j] += d;
            mutual_information_at(&config.with_powers(&p).unwrap(), rho, &tight()).unwrap()
        };
        let second = (at(step) - 2.0 * at(0.0) + at(-step)) / (step * step);
        prop_assert!(second <= 1e-8, "second difference {second}");
    }

    #[test]
    fn waterfilling_is_stationary_and_feasible(seed in any::<u64>(), total in 0.5f64..5.0) {
        let (config, rho, _) = instance(seed, 3, 6, 4);
        let wf = waterfill_sum(&config, rho, total, &WaterfillOptions::default()).unwrap();
        let lambda = wf.water_level.unwrap();
        let solved = config.with_powers(&wf.power_diags).unwrap();
        let grad = mutual_information_gradient(&solved, &wf.solution);
        let used: f64 = wf.power_diags.iter().map(|row| row.iter().sum::<f64>() / row.len() as f64).sum();
        prop_assert!(used <= total + 1e-8);
        for (k, row) in wf.power_diags.iter().enumerate() {
            let spread = row.iter().cloned().fold(f64::MIN, f64::max) - row.iter().cloned().fold(f64::MAX, f64::min);
            prop_assert!(spread <= 1e-9);
            for (j, p) in row.iter().enumerate() {
                if *p > 0.0 {
                    prop_assert!((grad[k][j] - lambda / row.len() as f64).abs() <= 1e-6);
                }
            }
        }
        for w in wf.objective_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-8, "objective fell from {} to {}", w[0], w[1]);
        }
    }

    #[test]
    fn rates_increase_with_snr(seed in any::<u64>()) {
        let (config, _, _) = instance(seed, 3, 6, 4);
        let reports: Vec<_> = [10.0, 3.0, 1.0, 0.3, 0.1, 0.03]
            .iter()
            .map(|rho| evaluate(&config, *rho, &SolverOptions::default()).unwrap())
            .collect();
        for w in reports.windows(2) {
            prop_assert!(w[1].mutual_info >= w[0].mutual_info);
            prop_assert!(w[1].mmse_sumrate >= w[0].mmse_sumrate);
            for (a, b) in w[0].mmse_sinr.iter().flatten().zip(w[1].mmse_sinr.iter().flatten()) {
                prop_assert!(b >= a);
            }
        }
    }

    #[test]
    fn inner_root_ignores_starting_point(
        powers in prop::collection::vec(0.1f64..4.0, 1..6),
        extra in 0usize..4,
        g in 0.05f64..3.0,
        cbar in 0.2f64..2.0,
        t in 0.0f64..1.0,
    ) {
        let c = powers.len() as f64 / (powers.len() + extra) as f64;
        let tol = 1e-12;
        let from_zero = solve_gbar_inner(&powers, g, c, cbar, tol, 10_000).unwrap();
        let init = t * c * cbar / g;
        // with c = 1 a second root can sit on the bound; start below it
        prop_assume!(c < 1.0 || init < from_zero);
        let from_init = solve_gbar_inner_from(init, &powers, g, c, cbar, tol, 10_000, 0).unwrap();
        prop_assert!((from_zero - from_init).abs() < 10.0 * tol);
    }

    #[test]
    fn haar_columns_are_orthonormal(n in 1usize..9, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let m = 1 + ((n - 1) as f64 * frac) as usize;
        let w = sample_haar_columns(n, m, &mut trial_rng(seed, 0)).unwrap();
        let gram = w.adjoint().matmul(&w).unwrap();
        for i in 0..m {
            for j in 0..m {
                let expect = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram.get(i, j).re - expect).abs() < 1e-12 && gram.get(i, j).im.abs() < 1e-12);
            }
        }
    }
}
