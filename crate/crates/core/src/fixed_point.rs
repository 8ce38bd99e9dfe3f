//! Solver for the coupled system in `(g_k, ḡ_k, δ_kj)`:
//!
//! ```text
//! ḡ_k  = (1/N) Σ_j p_kj / (c̄_k − g_k ḡ_k + g_k p_kj)
//! g_k  = (1/N) Σ_j δ_kj / (1 + ḡ_k δ_kj)
//! δ_kj = (1/N) tr R_kj T,   T = ((1/N) Σ_kj ḡ_k R_kj / (1 + ḡ_k δ_kj) + ρ I)^{-1}
//! ```
//!
//! The outer loop updates `g` while two inner loops drive `ḡ` and `δ` to
//! convergence. Within outer step `t`, `ḡ^(t)` uses `g^(t-1)` and the `δ`
//! loop holds `ḡ` at `ḡ^(t-1)`; every `δ` loop restarts from `1/ρ` and every
//! `ḡ` loop from `0`. By default the outer loop is accelerated with
//! Anderson mixing (see [`SolverOptions::anderson_depth`]); setting the depth
//! to zero runs the iteration exactly as stated.
//!
//! Convergence is measured on `|lhs - rhs| / max(1, |lhs|)`, which is the
//! absolute residual whenever the unknowns are at most one.

use crate::error::{Equation, Error, Result};
use crate::matrix::{inverse_hpd, trace_product_raw, HermitianMatrix};
use crate::scenario::ScenarioConfig;

pub use crate::scenario::{ColumnCovariance, ScenarioBuilder, Transmitter};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Outer tolerance; inner loops use `tol / 10`.
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Anderson mixing depth on the outer loop; 0 runs the plain nested
    /// iteration.
    pub anderson_depth: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_outer: 10_000,
            max_inner: 100_000,
            anderson_depth: 4,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    pub fn inner_tol(&self) -> f64 {
        self.tol / 10.0
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidInput("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalSolution {
    pub g: Vec<f64>,
    pub gbar: Vec<f64>,
    /// `delta[k][j]` for `j < N_k`.
    pub delta: Vec<Vec<f64>>,
    pub rho: f64,
    pub outer_iterations: usize,
    /// Largest scaled residual over the three equations.
    pub residual: f64,
    /// Residual after each outer iteration.
    pub residual_trace: Vec<f64>,
}

impl FundamentalSolution {
    /// `T(ρ)` built from this solution.
    pub fn t_matrix(&self, config: &ScenarioConfig) -> Result<HermitianMatrix> {
        build_t_matrix(config, &self.gbar, &self.delta, self.rho)
    }

    /// `ρ (1/N) tr T + Σ_k ḡ_k g_k`, which equals one at the fixed point.
    pub fn trace_identity(&self, config: &ScenarioConfig) -> Result<f64> {
        let t = self.t_matrix(config)?;
        let n = config.n_rx() as f64;
        let cross: f64 = self.g.iter().zip(&self.gbar).map(|(g, gb)| g * gb).sum();
        Ok(self.rho * t.trace() / n + cross)
    }
}

fn scaled_diff(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / lhs.abs().max(1.0)
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidInput(format!("noise power must be positive, got {rho}")));
    }
    Ok(())
}

fn check_shapes(config: &ScenarioConfig, gbar: &[f64], delta: Option<&[Vec<f64>]>) -> Result<()> {
    let k = config.num_transmitters();
    if gbar.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: gbar.len(),
        });
    }
    if let Some(gb) = gbar.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(Error::InvalidInput(format!("gbar entries must be nonnegative, got {gb}")));
    }
    if let Some(delta) = delta {
        if delta.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: delta.len(),
            });
        }
        for (tx, d) in config.transmitters().iter().zip(delta) {
            if d.len() != tx.n_antennas {
                return Err(Error::DimensionMismatch {
                    expected: tx.n_antennas,
                    got: d.len(),
                });
            }
            if let Some(v) = d.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::InvalidInput(format!("delta entries must be nonnegative, got {v}")));
            }
        }
    }
    Ok(())
}

/// `T^{-1} = (1/N) Σ_kj ḡ_k R_kj / (1 + ḡ_k δ_kj) + ρ I`, accumulated per
/// covariance base.
pub(crate) fn t_inverse(config: &ScenarioConfig, gbar: &[f64], delta: &[Vec<f64>], rho: f64) -> HermitianMatrix {
    let n = config.n_rx();
    let mut weights = vec![0.0; config.family().len()];
    for (k, tx) in config.transmitters().iter().enumerate() {
        for (col, d) in tx.columns.iter().zip(&delta[k]) {
            weights[col.base] += gbar[k] * col.scale / (1.0 + gbar[k] * d);
        }
    }
    let mut acc = HermitianMatrix::zeros(n);
    for (w, r) in weights.iter().zip(config.family()) {
        if *w != 0.0 {
            // dimensions are validated by ScenarioConfig
            acc.axpy(w / n as f64, r).expect("family dimension");
        }
    }
    acc.shift_diagonal(rho);
    acc
}

/// `T = ((1/N) Σ_kj ḡ_k R_kj / (1 + ḡ_k δ_kj) + ρ I)^{-1}`.
pub fn build_t_matrix(config: &ScenarioConfig, gbar: &[f64], delta: &[Vec<f64>], rho: f64) -> Result<HermitianMatrix> {
    check_rho(rho)?;
    check_shapes(config, gbar, Some(delta))?;
    inverse_hpd(&t_inverse(config, gbar, delta, rho))
}

/// `(1/N) Re tr(R̃_m T)` for every family member.
fn base_traces(config: &ScenarioConfig, t: &HermitianMatrix) -> Vec<f64> {
    let n = config.n_rx() as f64;
    config
        .family()
        .iter()
        .map(|r| trace_product_raw(r.as_dmatrix(), t.as_dmatrix()).re / n)
        .collect()
}

fn delta_from_traces(config: &ScenarioConfig, traces: &[f64]) -> Vec<Vec<f64>> {
    config
        .transmitters()
        .iter()
        .map(|tx| tx.columns.iter().map(|c| c.scale * traces[c.base]).collect())
        .collect()
}

/// One application of the `δ` map: `(1/N) tr R_kj T(ḡ, δ)`.
fn delta_step(config: &ScenarioConfig, gbar: &[f64], delta: &[Vec<f64>], rho: f64) -> Result<Vec<Vec<f64>>> {
    let t = inverse_hpd(&t_inverse(config, gbar, delta, rho))?;
    Ok(delta_from_traces(config, &base_traces(config, &t)))
}

fn max_scaled_change(new: &[Vec<f64>], old: &[Vec<f64>]) -> f64 {
    new.iter()
        .zip(old)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| scaled_diff(*x, *y)))
        .fold(0.0, f64::max)
}

/// Solves the `δ` system for fixed `ḡ`, starting from `δ = 1/ρ`.
pub fn solve_delta(config: &ScenarioConfig, gbar: &[f64], rho: f64, tol: f64, max_iter: usize) -> Result<Vec<Vec<f64>>> {
    check_rho(rho)?;
    check_shapes(config, gbar, None)?;
    let mut delta: Vec<Vec<f64>> = config
        .transmitters()
        .iter()
        .map(|tx| vec![1.0 / rho; tx.n_antennas])
        .collect();
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        let next = delta_step(config, gbar, &delta, rho)?;
        change = max_scaled_change(&next, &delta);
        delta = next;
        if change <= tol {
            return Ok(delta);
        }
    }
    Err(Error::NoConvergence {
        equation: Equation::Delta,
        iterations: max_iter,
        residual: change,
        per_equation: None,
    })
}

/// Right-hand side of the `ḡ` equation.
fn gbar_map(power: &[f64], g: f64, gbar: f64, cbar: f64, inv_n: f64) -> f64 {
    inv_n * power.iter().map(|p| p / (cbar - g * gbar + g * p)).sum::<f64>()
}

/// Solves `ḡ = (1/N) Σ_j p_j / (c̄ − g ḡ + g p_j)` for its smallest root,
/// which lies in `[0, c c̄ / g]`, starting from `ḡ = 0`.
///
/// `N` is recovered from the ratios as `n_k / (c c̄)`.
pub fn solve_gbar_inner(power: &[f64], g: f64, c: f64, cbar: f64, tol: f64, max_iter: usize) -> Result<f64> {
    solve_gbar_inner_from(0.0, power, g, c, cbar, tol, max_iter, 0)
}

/// As [`solve_gbar_inner`] with an explicit starting point inside the bracket.
/// `k` only labels errors.
#[allow(clippy::too_many_arguments)]
pub fn solve_gbar_inner_from(
    init: f64,
    power: &[f64],
    g: f64,
    c: f64,
    cbar: f64,
    tol: f64,
    max_iter: usize,
    k: usize,
) -> Result<f64> {
    if power.is_empty() {
        return Err(Error::InvalidInput("power diagonal must not be empty".into()));
    }
    if !(g.is_finite() && g >= 0.0) {
        return Err(Error::InvalidInput(format!("g must be nonnegative, got {g}")));
    }
    if !(c > 0.0 && c <= 1.0 && cbar > 0.0) {
        return Err(Error::InvalidInput(format!("invalid ratios c = {c}, cbar = {cbar}")));
    }
    let inv_n = c * cbar / power.len() as f64;
    if g == 0.0 {
        return Ok(inv_n * power.iter().sum::<f64>() / cbar);
    }
    let bound = c * cbar / g;
    if !(init >= 0.0 && init <= bound) {
        return Err(Error::BracketViolation { k, value: init, bound });
    }
    // f(x) = x - map(x) is concave with f(0) ≤ 0 ≤ f(bound), so the smallest
    // root is bracketed by [lo, hi] with f(lo) < 0 ≤ f(hi). Newton steps from
    // the left increase monotonically toward it; bisection covers rounding
    // trouble near a double root.
    let (mut lo, mut hi) = (0.0_f64, bound);
    let mut x = init;
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        let (value, slope) = gbar_map_with_slope(power, g, x, cbar, inv_n);
        let f = x - value;
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let df = 1.0 - slope;
        let newton = x - f / df;
        let next = if df > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        change = scaled_diff(next, x);
        x = next;
        if change <= tol || scaled_diff(hi, lo) <= tol {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence {
        equation: Equation::Gbar { k },
        iterations: max_iter,
        residual: change,
        per_equation: None,
    })
}

/// The `ḡ` map and its derivative in `ḡ`.
fn gbar_map_with_slope(power: &[f64], g: f64, gbar: f64, cbar: f64, inv_n: f64) -> (f64, f64) {
    let (mut value, mut slope) = (0.0, 0.0);
    for p in power {
        let d = cbar - g * gbar + g * p;
        value += p / d;
        slope += p * g / (d * d);
    }
    (inv_n * value, inv_n * slope)
}

fn g_from_delta(config: &ScenarioConfig, gbar: &[f64], delta: &[Vec<f64>]) -> Vec<f64> {
    let n = config.n_rx() as f64;
    delta
        .iter()
        .zip(gbar)
        .map(|(d, gb)| d.iter().map(|x| x / (1.0 + gb * x)).sum::<f64>() / n)
        .collect()
}

/// Scaled residuals of the `ḡ`, `g` and `δ` equations at `(g, ḡ, δ)`.
pub fn residuals(config: &ScenarioConfig, g: &[f64], gbar: &[f64], delta: &[Vec<f64>], rho: f64) -> Result<[f64; 3]> {
    check_rho(rho)?;
    check_shapes(config, gbar, Some(delta))?;
    let inv_n = 1.0 / config.n_rx() as f64;
    let mut r_gbar = 0.0_f64;
    for (k, tx) in config.transmitters().iter().enumerate() {
        let rhs = gbar_map(&tx.power, g[k], gbar[k], config.cbar(k), inv_n);
        r_gbar = r_gbar.max(scaled_diff(gbar[k], rhs));
    }
    let g_rhs = g_from_delta(config, gbar, delta);
    let r_g = g.iter().zip(&g_rhs).map(|(a, b)| scaled_diff(*a, *b)).fold(0.0, f64::max);
    let d_rhs = delta_step(config, gbar, delta, rho)?;
    let r_delta = max_scaled_change(delta, &d_rhs);
    Ok([r_gbar, r_g, r_delta])
}

/// Solves the full system at noise power `rho`.
///
/// With `anderson_depth == 0` this is the plain nested iteration described
/// in the module docs. Otherwise the outer map `g ↦ h(g)` (see [`outer_map`])
/// is iterated with Anderson mixing over the last `anderson_depth` steps,
/// which has the same fixed point but needs far fewer outer steps when the
/// plain iteration contracts slowly (high SNR, many streams).
pub fn solve_fundamental(config: &ScenarioConfig, rho: f64, opts: &SolverOptions) -> Result<FundamentalSolution> {
    check_rho(rho)?;
    opts.validate()?;
    if opts.anderson_depth == 0 {
        solve_nested(config, rho, opts)
    } else {
        solve_anderson(config, rho, opts)
    }
}

fn solve_gbar_all(config: &ScenarioConfig, g: &[f64], opts: &SolverOptions) -> Result<Vec<f64>> {
    (0..config.num_transmitters())
        .map(|k| {
            let tx = config.transmitter(k);
            solve_gbar_inner_from(0.0, &tx.power, g[k], config.c(k), config.cbar(k), opts.inner_tol(), opts.max_inner, k)
        })
        .collect()
}

fn finish(
    config: &ScenarioConfig,
    rho: f64,
    opts: &SolverOptions,
    (g, gbar, delta): (Vec<f64>, Vec<f64>, Vec<Vec<f64>>),
    t: usize,
    trace: &mut Vec<f64>,
) -> Result<std::result::Result<FundamentalSolution, [f64; 3]>> {
    let last = residuals(config, &g, &gbar, &delta, rho)?;
    let residual = last.iter().copied().fold(0.0, f64::max);
    trace.push(residual);
    if residual <= opts.tol {
        Ok(Ok(FundamentalSolution {
            g,
            gbar,
            delta,
            rho,
            outer_iterations: t,
            residual,
            residual_trace: std::mem::take(trace),
        }))
    } else {
        Ok(Err(last))
    }
}

fn no_convergence(opts: &SolverOptions, last: [f64; 3]) -> Error {
    Error::NoConvergence {
        equation: Equation::Outer,
        iterations: opts.max_outer,
        residual: last.iter().copied().fold(0.0, f64::max),
        per_equation: Some(last),
    }
}

fn solve_nested(config: &ScenarioConfig, rho: f64, opts: &SolverOptions) -> Result<FundamentalSolution> {
    let k_count = config.num_transmitters();
    let mut g_prev = vec![0.0; k_count];
    let mut gbar_prev = vec![0.0; k_count];
    let mut trace = Vec::new();
    let mut last = [f64::INFINITY; 3];

    for t in 1..=opts.max_outer {
        let gbar = solve_gbar_all(config, &g_prev, opts)?;
        let delta = solve_delta(config, &gbar_prev, rho, opts.inner_tol(), opts.max_inner)?;
        let g = g_from_delta(config, &gbar_prev, &delta);
        match finish(config, rho, opts, (g.clone(), gbar.clone(), delta), t, &mut trace)? {
            Ok(sol) => return Ok(sol),
            Err(r) => last = r,
        }
        g_prev = g;
        gbar_prev = gbar;
    }
    Err(no_convergence(opts, last))
}

/// `(ḡ, δ, h)` at one outer iterate.
type OuterEval = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>);

/// `ḡ(x)`, `δ(ḡ(x))` and `h(x)`.
fn outer_eval(config: &ScenarioConfig, x: &[f64], rho: f64, opts: &SolverOptions) -> Result<OuterEval> {
    let gbar = solve_gbar_all(config, x, opts)?;
    let delta = solve_delta(config, &gbar, rho, opts.inner_tol(), opts.max_inner)?;
    let h = g_from_delta(config, &gbar, &delta);
    Ok((gbar, delta, h))
}

/// Anderson mixing: `x = h_m − ΔH γ` with `γ = argmin ‖r_m − ΔR γ‖`, where
/// `r = h − x` and `Δ` takes successive differences over the history.
fn anderson_step(xs: &[Vec<f64>], hs: &[Vec<f64>]) -> Option<Vec<f64>> {
    let m = xs.len();
    let dim = xs[0].len();
    let last = hs.last()?;
    if m < 2 {
        return None;
    }
    let r = |i: usize| -> Vec<f64> { hs[i].iter().zip(&xs[i]).map(|(h, x)| h - x).collect() };
    let r_last = r(m - 1);
    let dr = nalgebra::DMatrix::from_fn(dim, m - 1, |row, col| r(col + 1)[row] - r(col)[row]);
    let rhs = nalgebra::DVector::from_column_slice(&r_last);
    let gamma = dr.svd(true, true).solve(&rhs, 1e-14).ok()?;
    let next: Vec<f64> = (0..dim)
        .map(|row| {
            let correction: f64 = (0..m - 1).map(|col| (hs[col + 1][row] - hs[col][row]) * gamma[col]).sum();
            last[row] - correction
        })
        .collect();
    next.iter().all(|v| v.is_finite() && *v >= 0.0).then_some(next)
}

fn solve_anderson(config: &ScenarioConfig, rho: f64, opts: &SolverOptions) -> Result<FundamentalSolution> {
    let k_count = config.num_transmitters();
    let mut x = vec![0.0; k_count];
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut hs: Vec<Vec<f64>> = Vec::new();
    let mut trace = Vec::new();
    let mut last = [f64::INFINITY; 3];

    for t in 1..=opts.max_outer {
        let (gbar, delta, h) = outer_eval(config, &x, rho, opts)?;
        match finish(config, rho, opts, (h.clone(), gbar, delta), t, &mut trace)? {
            Ok(sol) => return Ok(sol),
            Err(r) => last = r,
        }
        xs.push(x);
        hs.push(h.clone());
        if xs.len() > opts.anderson_depth + 1 {
            xs.remove(0);
            hs.remove(0);
        }
        x = match anderson_step(&xs, &hs) {
            Some(next) => next,
            None if xs.len() < 2 => h,
            None => {
                // fall back to a plain step and restart the history
                xs.clear();
                hs.clear();
                h
            }
        };
    }
    Err(no_convergence(opts, last))
}

/// The outer map `x ↦ h(x)`: `ḡ_k` solves its equation with `g_k = x_k`,
/// `δ` solves its system for that `ḡ`, and
/// `h_k = (1/N) Σ_j δ_kj / (1 + ḡ_k δ_kj)`.
pub fn outer_map(config: &ScenarioConfig, x: &[f64], rho: f64, opts: &SolverOptions) -> Result<Vec<f64>> {
    check_rho(rho)?;
    if x.len() != config.num_transmitters() {
        return Err(Error::DimensionMismatch {
            expected: config.num_transmitters(),
            got: x.len(),
        });
    }
    Ok(outer_eval(config, x, rho, opts)?.2)
}
