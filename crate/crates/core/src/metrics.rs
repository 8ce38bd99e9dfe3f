//! Deterministic approximations of the normalized mutual information, the
//! per-stream MMSE SINR and the MMSE sum-rate, all in nats per receive
//! antenna.

use crate::error::{Error, Result};
use crate::fixed_point::{solve_fundamental, t_inverse, FundamentalSolution, SolverOptions};
use crate::matrix::logdet_hpd;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub mutual_info: f64,
    pub v_term: f64,
    /// `mmse_sinr[k][j]` for each stream.
    pub mmse_sinr: Vec<Vec<f64>>,
    pub mmse_sumrate: f64,
    pub rho: f64,
}

fn positive(context: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain { context, value })
    }
}

fn check_solution(config: &ScenarioConfig, sol: &FundamentalSolution) -> Result<()> {
    let k = config.num_transmitters();
    if sol.g.len() != k || sol.gbar.len() != k || sol.delta.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: sol.g.len(),
        });
    }
    Ok(())
}

/// `c̄_k − g_k ḡ_k` for every transmitter.
fn slack(config: &ScenarioConfig, sol: &FundamentalSolution) -> Result<Vec<f64>> {
    (0..config.num_transmitters())
        .map(|k| positive("cbar - g gbar", config.cbar(k) - sol.g[k] * sol.gbar[k]))
        .collect()
}

/// `V̄ = (1/N) log det(I + T^{-1}/ρ - I) − Σ ḡ_k g_k + (1/N) Σ_kj log(1 + ḡ_k δ_kj)`.
pub fn v_term(config: &ScenarioConfig, sol: &FundamentalSolution) -> Result<f64> {
    check_solution(config, sol)?;
    let n = config.n_rx() as f64;
    // I + S/ρ = T^{-1}/ρ, so log det(I + S/ρ) = log det T^{-1} − N log ρ
    let t_inv = t_inverse(config, &sol.gbar, &sol.delta, sol.rho);
    let logdet = logdet_hpd(&t_inv)? - n * sol.rho.ln();
    let cross: f64 = sol.g.iter().zip(&sol.gbar).map(|(g, gb)| g * gb).sum();
    let mut log_sum = 0.0;
    for (gb, d) in sol.gbar.iter().zip(&sol.delta) {
        for x in d {
            log_sum += positive("1 + gbar delta", 1.0 + gb * x)?.ln();
        }
    }
    Ok(logdet / n - cross + log_sum / n)
}

/// Deterministic equivalent `Ī_N(ρ)` of the normalized mutual information.
pub fn deterministic_mutual_information(config: &ScenarioConfig, sol: &FundamentalSolution) -> Result<f64> {
    let v = v_term(config, sol)?;
    let slack = slack(config, sol)?;
    let n = config.n_rx() as f64;
    let mut acc = v;
    for (k, tx) in config.transmitters().iter().enumerate() {
        let (g, s, c, cbar) = (sol.g[k], slack[k], config.c(k), config.cbar(k));
        let mut logdet = 0.0;
        for p in &tx.power {
            logdet += positive("cbar - g gbar + g p", s + g * p)?.ln();
        }
        acc += logdet / n + (1.0 - c) * cbar * s.ln() - cbar * cbar.ln();
    }
    Ok(acc)
}

/// `γ̄_kj = p_kj g_k / (c̄_k − g_k ḡ_k)`.
pub fn deterministic_mmse_sinr(config: &ScenarioConfig, sol: &FundamentalSolution) -> Result<Vec<Vec<f64>>> {
    check_solution(config, sol)?;
    let slack = slack(config, sol)?;
    Ok(config
        .transmitters()
        .iter()
        .enumerate()
        .map(|(k, tx)| tx.power.iter().map(|p| p * sol.g[k] / slack[k]).collect())
        .collect())
}

/// `R̄_N = (1/N) Σ_kj log(1 + γ̄_kj)`.
pub fn deterministic_mmse_sumrate(config: &ScenarioConfig, sol: &FundamentalSolution) -> Result<f64> {
    let sinr = deterministic_mmse_sinr(config, sol)?;
    Ok(sumrate_from_sinr(&sinr, config.n_rx()))
}

pub(crate) fn sumrate_from_sinr(sinr: &[Vec<f64>], n_rx: usize) -> f64 {
    sinr.iter().flatten().map(|g| g.ln_1p()).sum::<f64>() / n_rx as f64
}

/// `δ(ρ) = (−1 + sqrt(1 + 4/ρ)) / 2`, the Marčenko–Pastur Stieltjes transform at `−ρ`.
pub fn closed_form_mp_delta(rho: f64) -> f64 {
    (-1.0 + (1.0 + 4.0 / rho).sqrt()) / 2.0
}

/// Mutual information of the i.i.d. square channel in closed form.
pub fn closed_form_mp_mutual_information(rho: f64) -> f64 {
    let d = closed_form_mp_delta(rho);
    (1.0 + d + 1.0 / rho).ln() - d / (1.0 + d)
}

pub fn rate_report(config: &ScenarioConfig, sol: &FundamentalSolution) -> Result<RateReport> {
    let mmse_sinr = deterministic_mmse_sinr(config, sol)?;
    Ok(RateReport {
        mutual_info: deterministic_mutual_information(config, sol)?,
        v_term: v_term(config, sol)?,
        mmse_sumrate: sumrate_from_sinr(&mmse_sinr, config.n_rx()),
        mmse_sinr,
        rho: sol.rho,
    })
}

/// Solves the fixed point at `rho` and evaluates every metric.
pub fn evaluate(config: &ScenarioConfig, rho: f64, opts: &SolverOptions) -> Result<RateReport> {
    let sol = solve_fundamental(config, rho, opts)?;
    rate_report(config, &sol)
}

/// Deterministic mutual information at `rho` (solve + evaluate).
pub fn mutual_information_at(config: &ScenarioConfig, rho: f64, opts: &SolverOptions) -> Result<f64> {
    let sol = solve_fundamental(config, rho, opts)?;
    deterministic_mutual_information(config, &sol)
}
