//! Power allocation maximizing the deterministic mutual information.
//!
//! Under a sum constraint `Σ_k (1/n_k) tr P_k = P` the optimum is found by
//! alternating between the fixed-point solver and a water-filling step
//!
//! ```text
//! p_kj = (ḡ_k − c̄_k / g_k + c_k c̄_k / λ)^+
//! ```
//!
//! with `(g, ḡ)` held at the values of the previous allocation. All streams of
//! a transmitter get the same power.

use crate::error::{Error, Result};
use crate::fixed_point::{solve_fundamental, FundamentalSolution, SolverOptions};
use crate::metrics::deterministic_mutual_information;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum PowerConstraint {
    /// Average per-stream power `P_k` for every transmitter.
    Individual(Vec<f64>),
    /// `Σ_k (1/n_k) tr P_k = P`.
    Sum(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillOptions {
    /// Stop when no per-stream power moves by more than `tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub solver: SolverOptions,
}

impl Default for WaterfillOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillResult {
    /// Diagonal of `P_k` for every transmitter.
    pub power_diags: Vec<Vec<f64>>,
    /// `λ`; `None` when the budget is zero.
    pub water_level: Option<f64>,
    pub iterations: usize,
    /// `Ī_N` after each iteration.
    pub objective_trace: Vec<f64>,
    /// Fixed point at the returned allocation.
    pub solution: FundamentalSolution,
    pub mutual_info: f64,
}

/// Every stream of transmitter `k` at `levels[k]`.
pub fn optimal_power_individual(config: &ScenarioConfig, levels: &[f64]) -> Result<Vec<Vec<f64>>> {
    if levels.len() != config.num_transmitters() {
        return Err(Error::DimensionMismatch {
            expected: config.num_transmitters(),
            got: levels.len(),
        });
    }
    if let Some(p) = levels.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::InvalidInput(format!("invalid power level {p}")));
    }
    Ok(config
        .transmitters()
        .iter()
        .zip(levels)
        .map(|(tx, &p)| vec![p; tx.n_streams()])
        .collect())
}

/// Per-transmitter power `p_k = (a_k + c_k c̄_k μ)^+` with `μ = 1/λ` chosen
/// so that `Σ_k p_k = total`, where `a_k = ḡ_k − c̄_k / g_k`.
///
/// `c[k]`, `cbar[k]` are the ratios of transmitter `k`. Transmitters with
/// `g_k = 0` get no power. Returns the powers and `λ` (`None` if `total = 0`).
pub fn water_level_solve(gbar: &[f64], g: &[f64], c: &[f64], cbar: &[f64], total: f64) -> Result<(Vec<f64>, Option<f64>)> {
    let k = gbar.len();
    if g.len() != k || c.len() != k || cbar.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: g.len() });
    }
    if !(total.is_finite() && total >= 0.0) {
        return Err(Error::InvalidInput(format!("power budget must be nonnegative, got {total}")));
    }
    if total == 0.0 {
        return Ok((vec![0.0; k], None));
    }
    // (offset a_k, slope c_k c̄_k) of the active transmitters
    let lines: Vec<Option<(f64, f64)>> = (0..k)
        .map(|i| (g[i] > 0.0).then(|| (gbar[i] - cbar[i] / g[i], c[i] * cbar[i])))
        .collect();
    // breakpoints μ_k = -a_k / s_k, ascending
    let mut order: Vec<(f64, f64, f64)> = lines.iter().flatten().map(|&(a, s)| (-a / s, a, s)).collect();
    if order.is_empty() {
        return Err(Error::AllSilent);
    }
    order.sort_by(|x, y| x.0.total_cmp(&y.0));
    // f(μ) = Σ_{active} (a + s μ) is linear between breakpoints; find the piece
    // containing f = total.
    let (mut sum_a, mut sum_s) = (0.0, 0.0);
    let mut mu = f64::NAN;
    for (i, &(brk, a, s)) in order.iter().enumerate() {
        sum_a += a;
        sum_s += s;
        let candidate = (total - sum_a) / sum_s;
        let next_brk = order.get(i + 1).map_or(f64::INFINITY, |x| x.0);
        if candidate >= brk && candidate <= next_brk {
            mu = candidate;
            break;
        }
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::Domain {
            context: "water level",
            value: mu,
        });
    }
    let powers = lines
        .iter()
        .map(|l| l.map_or(0.0, |(a, s)| (a + s * mu).max(0.0)))
        .collect();
    Ok((powers, Some(1.0 / mu)))
}

fn validate_budget(config: &ScenarioConfig, total: f64) -> Result<()> {
    if !(total.is_finite() && total >= 0.0) {
        return Err(Error::InvalidInput(format!("power budget must be nonnegative, got {total}")));
    }
    if config.num_transmitters() == 0 {
        return Err(Error::InvalidInput("no transmitters".into()));
    }
    Ok(())
}

/// Iterative water-filling under a sum constraint. Starts from
/// `p_kj = P n_k / Σ_l n_l`, which meets the budget with equality.
pub fn waterfill_sum(config: &ScenarioConfig, rho: f64, total: f64, opts: &WaterfillOptions) -> Result<WaterfillResult> {
    validate_budget(config, total)?;
    let k_count = config.num_transmitters();
    let c: Vec<f64> = (0..k_count).map(|k| config.c(k)).collect();
    let cbar: Vec<f64> = (0..k_count).map(|k| config.cbar(k)).collect();
    let expand = |levels: &[f64]| -> Vec<Vec<f64>> {
        config
            .transmitters()
            .iter()
            .zip(levels)
            .map(|(tx, &p)| vec![p; tx.n_streams()])
            .collect()
    };

    let streams: usize = config.transmitters().iter().map(|tx| tx.n_streams()).sum();
    let mut levels: Vec<f64> = config
        .transmitters()
        .iter()
        .map(|tx| total * tx.n_streams() as f64 / streams as f64)
        .collect();
    let mut current = config.with_powers(&expand(&levels))?;
    let mut sol = solve_fundamental(&current, rho, &opts.solver)?;
    let mut objective_trace = Vec::new();
    let mut trajectory = vec![expand(&levels)];
    let mut last_change = f64::INFINITY;

    for it in 1..=opts.max_iter {
        let (next, water_level) = water_level_solve(&sol.gbar, &sol.g, &c, &cbar, total)?;
        last_change = next
            .iter()
            .zip(&levels)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        levels = next;
        current = config.with_powers(&expand(&levels))?;
        sol = solve_fundamental(&current, rho, &opts.solver)?;
        let objective = deterministic_mutual_information(&current, &sol)?;
        objective_trace.push(objective);
        trajectory.push(expand(&levels));
        if last_change <= opts.tol {
            return Ok(WaterfillResult {
                power_diags: expand(&levels),
                water_level,
                iterations: it,
                objective_trace,
                solution: sol,
                mutual_info: objective,
            });
        }
    }
    Err(Error::WaterfillNoConvergence {
        iterations: opts.max_iter,
        last_change,
        trajectory,
    })
}

/// Optimal allocation under either constraint.
pub fn optimize_power(config: &ScenarioConfig, rho: f64, constraint: &PowerConstraint, opts: &WaterfillOptions) -> Result<Vec<Vec<f64>>> {
    match constraint {
        PowerConstraint::Individual(levels) => optimal_power_individual(config, levels),
        PowerConstraint::Sum(total) => Ok(waterfill_sum(config, rho, *total, opts)?.power_diags),
    }
}

/// `∂Ī_N / ∂p_kj = g_k / (N (c̄_k − g_k ḡ_k + g_k p_kj))` at a fixed point.
pub fn mutual_information_gradient(config: &ScenarioConfig, sol: &FundamentalSolution) -> Vec<Vec<f64>> {
    let n = config.n_rx() as f64;
    config
        .transmitters()
        .iter()
        .enumerate()
        .map(|(k, tx)| {
            let (g, gb, cbar) = (sol.g[k], sol.gbar[k], config.cbar(k));
            tx.power.iter().map(|p| g / (n * (cbar - g * gb + g * p))).collect()
        })
        .collect()
}
