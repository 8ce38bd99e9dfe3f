#![allow(dead_code)]

use detbeam::fixed_point::SolverOptions;
use detbeam::matrix::{HermitianMatrix, C64};
use detbeam::metrics::mutual_information_at;
use detbeam::scenario::{ScenarioBuilder, ScenarioConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `K = 1`, identity covariances, unit power on every stream.
pub fn iid(n: usize, n_tx: usize, n_streams: usize) -> ScenarioConfig {
    let r = HermitianMatrix::identity(n);
    ScenarioBuilder::new(n).transmitter(vec![1.0; n_streams], &vec![r; n_tx]).build().unwrap()
}

/// Random PSD matrix `A A^H` of rank `rank`, normalized to trace `scale * n`.
pub fn random_covariance(rng: &mut impl Rng, n: usize, rank: usize, scale: f64) -> HermitianMatrix {
    let a = DMatrix::from_fn(n, rank, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let m = &a * a.adjoint();
    let tr: f64 = (0..n).map(|i| m[(i, i)].re).sum();
    HermitianMatrix::from_dmatrix(m * C64::from(scale * n as f64 / tr)).unwrap()
}

/// Random instance with up to `max_k` transmitters and `N ≤ max_n` receive
/// antennas. Every column gets its own covariance; some are rank deficient.
pub fn random_config(rng: &mut impl Rng, max_k: usize, max_n: usize, max_tx: usize) -> ScenarioConfig {
    let n = rng.random_range(2..=max_n);
    let k_count = rng.random_range(1..=max_k);
    let mut builder = ScenarioBuilder::new(n);
    for _ in 0..k_count {
        let n_tx = rng.random_range(1..=max_tx);
        let n_streams = rng.random_range(1..=n_tx);
        let covs: Vec<HermitianMatrix> = (0..n_tx)
            .map(|_| {
                let rank = rng.random_range(1..=n);
                let scale = rng.random_range(0.2..2.0);
                random_covariance(rng, n, rank, scale)
            })
            .collect();
        let power = (0..n_streams).map(|_| rng.random_range(0.2..3.0)).collect();
        builder = builder.transmitter(power, &covs);
    }
    builder.build().unwrap()
}

/// Log-uniform noise power in `[1e-2, 10]`.
pub fn random_rho(rng: &mut impl Rng) -> f64 {
    10f64.powf(rng.random_range(-2.0..1.0))
}

pub fn tight() -> SolverOptions {
    SolverOptions::with_tol(1e-13)
}

/// Central difference of `Ī_N` in `p_kj`, re-solving the fixed point at each
/// perturbed allocation.
pub fn finite_difference(config: &ScenarioConfig, rho: f64, k: usize, j: usize, step: f64) -> f64 {
    let shifted = |d: f64| {
        let mut p = config.powers();
        p[k][j] += d;
        let cfg = config.with_powers(&p).unwrap();
        mutual_information_at(&cfg, rho, &tight()).unwrap()
    };
    (shifted(step) - shifted(-step)) / (2.0 * step)
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
