//! Monte Carlo sampling of the channel model and exact finite-size metrics.
//!
//! Column `j` of `H_k` is `R_kj^{1/2} u` with `u` i.i.d. circular complex
//! Gaussian of variance `1/N`; `W_k` holds the first `n_k` columns of a Haar
//! unitary. Trial `i` draws from `ChaCha8Rng::seed_from_u64(seed)` switched to
//! stream `i`, so trials are independent of execution order and thread count.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{inverse_hpd, logdet_hpd, psd_sqrt, ComplexMatrix, HermitianMatrix, C64};
use crate::metrics::sumrate_from_sinr;
use crate::scenario::ScenarioConfig;
use crate::stream_control::{stream_power_matrix, InterferenceScenario};

/// One draw of every `H_k` (`N × N_k`) and `W_k` (`N_k × n_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: Vec<ComplexMatrix>,
    pub w: Vec<ComplexMatrix>,
}

/// Generator for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Circular complex Gaussian with `E|z|^2 = variance`.
fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, variance: f64, rng: &mut R) -> DMatrix<C64> {
    // fill column by column so the draw order is fixed
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = complex_gaussian(rng, variance);
        }
    }
    m
}

/// `n_streams` orthonormal columns of an `n_antennas × n_antennas` Haar
/// unitary: thin QR of a complex Gaussian with the phases of `diag(R)`
/// moved into `Q`.
pub fn sample_haar_columns<R: Rng + ?Sized>(n_antennas: usize, n_streams: usize, rng: &mut R) -> Result<ComplexMatrix> {
    if n_streams == 0 || n_streams > n_antennas {
        return Err(Error::InvalidInput(format!("stream count {n_streams} must be in 1..={n_antennas}")));
    }
    loop {
        let z = gaussian_matrix(n_antennas, n_streams, 1.0, rng);
        let qr = z.qr();
        let r = qr.r();
        if (0..n_streams).any(|i| r[(i, i)].norm() < 1e-12) {
            continue;
        }
        let mut q = qr.q();
        for j in 0..n_streams {
            let phase = r[(j, j)] / r[(j, j)].norm();
            for i in 0..n_antennas {
                q[(i, j)] *= phase;
            }
        }
        return ComplexMatrix::from_dmatrix(q);
    }
}

/// `N × N_k` channel whose column `j` is `R_j^{1/2} u_j`.
pub fn sample_channel<R: Rng + ?Sized>(covariances: &[HermitianMatrix], rng: &mut R) -> Result<ComplexMatrix> {
    let roots = covariances.iter().map(psd_sqrt).collect::<Result<Vec<_>>>()?;
    let n = roots.first().map_or(0, |r| r.dim());
    let scales = vec![1.0; roots.len()];
    let refs: Vec<&HermitianMatrix> = roots.iter().collect();
    ComplexMatrix::from_dmatrix(channel_from_roots(n, &refs, &scales, rng))
}

fn channel_from_roots<R: Rng + ?Sized>(n: usize, roots: &[&HermitianMatrix], scales: &[f64], rng: &mut R) -> DMatrix<C64> {
    let mut h = DMatrix::zeros(n, roots.len());
    for (j, (root, s)) in roots.iter().zip(scales).enumerate() {
        let u = gaussian_matrix(n, 1, 1.0 / n as f64, rng);
        let col = root.as_dmatrix() * u * C64::new(s.sqrt(), 0.0);
        h.set_column(j, &col.column(0));
    }
    h
}

/// Square roots of the covariance family, computed once per scenario.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    config: ScenarioConfig,
    roots: Vec<HermitianMatrix>,
}

impl ChannelSampler {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        Ok(Self {
            config: config.clone(),
            roots: config.family().iter().map(psd_sqrt).collect::<Result<_>>()?,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    /// Draws every `H_k`, then every `W_k`, in transmitter order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChannelRealization> {
        let n = self.config.n_rx();
        let mut h = Vec::new();
        for tx in self.config.transmitters() {
            let roots: Vec<&HermitianMatrix> = tx.columns.iter().map(|c| &self.roots[c.base]).collect();
            let scales: Vec<f64> = tx.columns.iter().map(|c| c.scale).collect();
            h.push(ComplexMatrix::from_dmatrix(channel_from_roots(n, &roots, &scales, rng))?);
        }
        let w = self
            .config
            .transmitters()
            .iter()
            .map(|tx| sample_haar_columns(tx.n_antennas, tx.n_streams(), rng))
            .collect::<Result<_>>()?;
        Ok(ChannelRealization { h, w })
    }
}

fn check_powers(realization: &ChannelRealization, powers: &[Vec<f64>]) -> Result<()> {
    if powers.len() != realization.h.len() || realization.w.len() != realization.h.len() {
        return Err(Error::DimensionMismatch {
            expected: realization.h.len(),
            got: powers.len(),
        });
    }
    for (w, p) in realization.w.iter().zip(powers) {
        if w.cols() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: w.cols(),
                got: p.len(),
            });
        }
    }
    Ok(())
}

/// Effective stream signatures `H_k W_k`, one matrix per transmitter.
fn signatures(realization: &ChannelRealization) -> Vec<DMatrix<C64>> {
    realization
        .h
        .iter()
        .zip(&realization.w)
        .map(|(h, w)| h.as_dmatrix() * w.as_dmatrix())
        .collect()
}

/// `B + ρ I` with `B = Σ_k H_k W_k P_k W_k^H H_k^H`, skipping stream `skip`.
fn gram_plus_noise(signatures: &[DMatrix<C64>], powers: &[Vec<f64>], rho: f64, skip: Option<(usize, usize)>) -> Result<HermitianMatrix> {
    let n = signatures.first().map_or(0, |s| s.nrows());
    let mut acc = DMatrix::<C64>::identity(n, n) * C64::new(rho, 0.0);
    for (k, (x, p)) in signatures.iter().zip(powers).enumerate() {
        for (j, pj) in p.iter().enumerate() {
            if *pj == 0.0 || skip == Some((k, j)) {
                continue;
            }
            let col = x.column(j);
            acc += col * col.adjoint() * C64::new(*pj, 0.0);
        }
    }
    HermitianMatrix::from_dmatrix(acc)
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidInput(format!("noise power must be positive, got {rho}")));
    }
    Ok(())
}

/// `I_N = (1/N) log det(I + B / ρ)`.
pub fn empirical_mutual_information(realization: &ChannelRealization, powers: &[Vec<f64>], rho: f64) -> Result<f64> {
    check_rho(rho)?;
    check_powers(realization, powers)?;
    let sig = signatures(realization);
    let a = gram_plus_noise(&sig, powers, rho, None)?.scaled(1.0 / rho);
    Ok(logdet_hpd(&a)? / a.dim() as f64)
}

/// SINR of the MMSE detector for every stream, from one shared resolvent
/// `Q = (B + ρI)^{-1}`: with `a = x^H Q x`, `γ = p a / (1 − p a)`.
pub fn empirical_mmse_sinr_all(realization: &ChannelRealization, powers: &[Vec<f64>], rho: f64) -> Result<Vec<Vec<f64>>> {
    check_rho(rho)?;
    check_powers(realization, powers)?;
    let sig = signatures(realization);
    let q = inverse_hpd(&gram_plus_noise(&sig, powers, rho, None)?)?;
    Ok(sig
        .iter()
        .zip(powers)
        .map(|(x, p)| {
            p.iter()
                .enumerate()
                .map(|(j, pj)| {
                    let col = x.column(j);
                    let a = (col.adjoint() * q.as_dmatrix() * col)[(0, 0)].re;
                    let pa = pj * a;
                    pa / (1.0 - pa)
                })
                .collect()
        })
        .collect())
}

/// `γ_kj = p_kj x^H (B_[kj] + ρ I)^{-1} x` with `x = H_k w_kj` and
/// `B_[kj]` the Gram matrix without stream `(k, j)`.
pub fn empirical_mmse_sinr(realization: &ChannelRealization, powers: &[Vec<f64>], k: usize, j: usize, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    check_powers(realization, powers)?;
    if k >= powers.len() || j >= powers[k].len() {
        return Err(Error::InvalidInput(format!("no stream ({}, {})", k + 1, j + 1)));
    }
    let sig = signatures(realization);
    let q = inverse_hpd(&gram_plus_noise(&sig, powers, rho, Some((k, j)))?)?;
    let col = sig[k].column(j);
    Ok(powers[k][j] * (col.adjoint() * q.as_dmatrix() * col)[(0, 0)].re)
}

/// `R_N = (1/N) Σ_kj log(1 + γ_kj)`.
pub fn empirical_mmse_sumrate(realization: &ChannelRealization, powers: &[Vec<f64>], rho: f64) -> Result<f64> {
    let sinr = empirical_mmse_sinr_all(realization, powers, rho)?;
    let n = realization.h.first().map_or(1, |h| h.rows());
    Ok(sumrate_from_sinr(&sinr, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    MutualInformation,
    MmseSumRate,
    /// SINR of stream `j` of transmitter `k` (both zero-based).
    Sinr { k: usize, j: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub trials: usize,
    pub mean: f64,
    /// Sample standard deviation (`n − 1` denominator); zero for one trial.
    pub std: f64,
    pub per_trial: Option<Vec<f64>>,
}

impl TrialSummary {
    /// Summary of `values` in the given (trial) order.
    pub fn from_values(values: Vec<f64>, keep: bool) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            trials: n,
            mean,
            std,
            per_trial: keep.then_some(values),
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        self.std / (self.trials as f64).sqrt()
    }
}

/// Runs `trials` independent trials in parallel; results are in trial order.
pub fn run_trials<T, F>(trials: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> Result<T> + Sync,
{
    if trials == 0 {
        return Err(Error::InvalidInput("at least one trial is required".into()));
    }
    (0..trials)
        .into_par_iter()
        .map(|i| f(&mut trial_rng(seed, i as u64)).map_err(|e| e.context(format!("trial {i}"))))
        .collect()
}

/// Every metric of one realization at one noise power.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    pub mutual_info: f64,
    pub sinr: Vec<Vec<f64>>,
    pub mmse_sumrate: f64,
}

fn trial_metrics(realization: &ChannelRealization, powers: &[Vec<f64>], rho: f64, n_rx: usize) -> Result<TrialMetrics> {
    let sinr = empirical_mmse_sinr_all(realization, powers, rho)?;
    Ok(TrialMetrics {
        mutual_info: empirical_mutual_information(realization, powers, rho)?,
        mmse_sumrate: sumrate_from_sinr(&sinr, n_rx),
        sinr,
    })
}

/// Metrics for every trial at every noise power in `rhos`. Each trial draws
/// one realization and evaluates it at all noise powers, so `result[i][t]`
/// is trial `t` at `rhos[i]`.
pub fn monte_carlo_sweep(config: &ScenarioConfig, rhos: &[f64], trials: usize, seed: u64) -> Result<Vec<Vec<TrialMetrics>>> {
    let sampler = ChannelSampler::new(config)?;
    let powers = config.powers();
    let per_trial = run_trials(trials, seed, |rng| {
        let real = sampler.sample(rng)?;
        rhos.iter()
            .map(|&rho| trial_metrics(&real, &powers, rho, config.n_rx()))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok((0..rhos.len())
        .map(|i| per_trial.iter().map(|t| t[i].clone()).collect())
        .collect())
}

fn pick(m: &TrialMetrics, metric: Metric) -> Result<f64> {
    match metric {
        Metric::MutualInformation => Ok(m.mutual_info),
        Metric::MmseSumRate => Ok(m.mmse_sumrate),
        Metric::Sinr { k, j } => m
            .sinr
            .get(k)
            .and_then(|s| s.get(j))
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("no stream ({}, {})", k + 1, j + 1))),
    }
}

/// Mean and spread of one metric over `trials` realizations.
pub fn monte_carlo_summary(config: &ScenarioConfig, rho: f64, trials: usize, seed: u64, metric: Metric) -> Result<TrialSummary> {
    let sweep = monte_carlo_sweep(config, &[rho], trials, seed)?;
    let values = sweep[0].iter().map(|m| pick(m, metric)).collect::<Result<Vec<_>>>()?;
    Ok(TrialSummary::from_values(values, true))
}

/// Summary of `metric` from an existing sweep column.
pub fn summarize(metrics: &[TrialMetrics], metric: Metric) -> Result<TrialSummary> {
    let values = metrics.iter().map(|m| pick(m, metric)).collect::<Result<Vec<_>>>()?;
    Ok(TrialSummary::from_values(values, false))
}

/// Empirical `(I_1, I_2)` of the interference channel at stream counts
/// `(n_1, n_2)`, sampling `H_qk = sqrt(a_qk) R_qk^{1/2} U_qk T_k^{1/2}` with
/// the full transmit correlation.
pub fn ic_monte_carlo(scenario: &InterferenceScenario, n1: usize, n2: usize, trials: usize, seed: u64) -> Result<[TrialSummary; 2]> {
    let n = scenario.n_rx();
    let n_tx = scenario.n_tx();
    let streams = [n1, n2];
    let powers = [stream_power_matrix(n_tx[0], n1)?, stream_power_matrix(n_tx[1], n2)?];
    let t_root = [psd_sqrt(scenario.transmit_corr(0))?, psd_sqrt(scenario.transmit_corr(1))?];
    let mut r_root = Vec::new();
    for q in 0..2 {
        for k in 0..2 {
            r_root.push(psd_sqrt(&scenario.receive_corr(q, k).scaled(scenario.path_gain(q, k)))?);
        }
    }
    let rho = scenario.rho;
    let rates = run_trials(trials, seed, |rng| {
        let w: Vec<DMatrix<C64>> = (0..2)
            .map(|k| sample_haar_columns(n_tx[k], streams[k], rng).map(|m| m.into_dmatrix()))
            .collect::<Result<_>>()?;
        let mut sig = vec![vec![DMatrix::<C64>::zeros(0, 0); 2]; 2];
        for q in 0..2 {
            for k in 0..2 {
                let u = gaussian_matrix(n, n_tx[k], 1.0 / n as f64, rng);
                sig[q][k] = r_root[2 * q + k].as_dmatrix() * u * t_root[k].as_dmatrix() * &w[k];
            }
        }
        let mut out = [0.0; 2];
        for q in 0..2 {
            let other = 1 - q;
            let both = gram_plus_noise(&sig[q], &powers, rho, None)?;
            let interferer = gram_plus_noise(&sig[q][other..=other], &powers[other..=other], rho, None)?;
            out[q] = (logdet_hpd(&both)? - logdet_hpd(&interferer)?) / n as f64;
        }
        Ok(out)
    })?;
    Ok([
        TrialSummary::from_values(rates.iter().map(|r| r[0]).collect(), false),
        TrialSummary::from_values(rates.iter().map(|r| r[1]).collect(), false),
    ])
}
