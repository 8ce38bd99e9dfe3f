//! Command-line front end: JSON scenario files in, CSV out.
//!
//! Exit codes: 0 on success, 1 for unusable input, 2 when a numerical method
//! fails to converge.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;

use crate::correlation::{jakes_correlation, JakesParams, KroneckerSpec};
use crate::error::{Error, Result};
use crate::fixed_point::SolverOptions;
use crate::matrix::{HermitianMatrix, C64, HERMITIAN_TOL};
use crate::metrics::{evaluate, RateReport};
use crate::montecarlo::{ic_monte_carlo, monte_carlo_sweep, summarize, Metric, TrialSummary};
use crate::presets::rho_from_snr_db;
use crate::power_allocation::{waterfill_sum, WaterfillOptions};
use crate::scenario::{ScenarioBuilder, ScenarioConfig};
use crate::stream_control::{exhaustive_stream_search, InterferenceScenario, StreamGridResult};

// ---------------------------------------------------------------------------
// scenario files

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Mac,
    Interference,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub model: Model,
    #[serde(rename = "N")]
    pub n: usize,
    pub snr_db_grid: Vec<f64>,
    pub transmitters: Vec<TransmitterSpec>,
    /// Interference model only: `links[q][k]` describes transmitter `k` at receiver `q`.
    #[serde(default)]
    pub links: Option<Vec<Vec<LinkSpec>>>,
    /// Budget for water-filling; defaults to the total of the uniform allocation.
    #[serde(default)]
    pub sum_power: Option<f64>,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloSpec>,
    #[serde(default)]
    pub solver: Option<SolverSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmitterSpec {
    #[serde(rename = "N_k")]
    pub n_antennas: usize,
    #[serde(rename = "n_k", default)]
    pub n_streams: Option<usize>,
    #[serde(default)]
    pub path_loss: Option<f64>,
    #[serde(default)]
    pub power: Option<PowerSpec>,
    #[serde(default)]
    pub transmit_corr: Option<CorrSpec>,
    #[serde(default)]
    pub receive_corr: Option<CorrSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    #[serde(default)]
    pub receive_corr: Option<CorrSpec>,
    #[serde(default)]
    pub path_loss: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PowerSpec {
    Mode(String),
    List(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CorrSpec {
    Named(String),
    Jakes(JakesWrapper),
    Matrix(MatrixWrapper),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JakesWrapper {
    pub jakes: JakesSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JakesSpec {
    pub theta_min: Angle,
    pub theta_max: Angle,
    pub spacing: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixWrapper {
    pub matrix: MatrixSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
}

/// Radians, either as a number or as an expression such as `"-pi/4"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Angle {
    Radians(f64),
    Expr(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

/// Parses `"pi"`, `"-pi/4"`, `"2*pi/3"`, `"3pi/4"` or a plain number.
pub fn parse_angle(text: &str) -> Result<f64> {
    let bad = || Error::InvalidInput(format!("cannot parse angle {text:?}"));
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
    if let Ok(v) = s.parse::<f64>() {
        return Ok(v);
    }
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, s.strip_prefix('+').unwrap_or(&s)),
    };
    let (num, den) = match body.split_once('/') {
        Some((n, d)) => (n, d.parse::<f64>().map_err(|_| bad())?),
        None => (body, 1.0),
    };
    let coeff = match num.strip_suffix("pi") {
        Some("") => std::f64::consts::PI,
        Some(c) => c.trim_end_matches('*').parse::<f64>().map_err(|_| bad())? * std::f64::consts::PI,
        None => num.parse::<f64>().map_err(|_| bad())?,
    };
    let v = sign * coeff / den;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

impl Angle {
    fn radians(&self) -> Result<f64> {
        match self {
            Angle::Radians(v) => Ok(*v),
            Angle::Expr(s) => parse_angle(s),
        }
    }
}

fn correlation(spec: Option<&CorrSpec>, dim: usize, what: &str) -> Result<HermitianMatrix> {
    let ctx = |e: Error| e.context(what.to_string());
    match spec {
        None => Ok(HermitianMatrix::identity(dim)),
        Some(CorrSpec::Named(name)) if name == "identity" => Ok(HermitianMatrix::identity(dim)),
        Some(CorrSpec::Named(name)) => Err(Error::InvalidInput(format!("{what}: unknown correlation {name:?}"))),
        Some(CorrSpec::Jakes(JakesWrapper { jakes })) => {
            let params = JakesParams::new(jakes.theta_min.radians().map_err(ctx)?, jakes.theta_max.radians().map_err(ctx)?, jakes.spacing, dim);
            Ok(jakes_correlation(&params).map_err(ctx)?.matrix)
        }
        Some(CorrSpec::Matrix(MatrixWrapper { matrix })) => explicit_matrix(matrix, dim).map_err(ctx),
    }
}

fn explicit_matrix(spec: &MatrixSpec, dim: usize) -> Result<HermitianMatrix> {
    let shape_ok = |rows: &Vec<Vec<f64>>| rows.len() == dim && rows.iter().all(|r| r.len() == dim);
    if !shape_ok(&spec.re) || spec.im.as_ref().is_some_and(|im| !shape_ok(im)) {
        return Err(Error::InvalidInput(format!("explicit matrix must be {dim} x {dim}")));
    }
    let entry = |i: usize, j: usize| C64::new(spec.re[i][j], spec.im.as_ref().map_or(0.0, |im| im[i][j]));
    let scale = (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).map(|(i, j)| entry(i, j).norm()).fold(1.0, f64::max);
    for i in 0..dim {
        for j in 0..dim {
            if (entry(i, j) - entry(j, i).conj()).norm() > HERMITIAN_TOL * scale {
                return Err(Error::InvalidInput("explicit matrix is not Hermitian".into()));
            }
        }
    }
    let entries = (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).map(|(i, j)| entry(i, j)).collect();
    HermitianMatrix::new(dim, entries)
}

fn positive_or_default(value: Option<f64>, default: f64, what: &str) -> Result<f64> {
    let v = value.unwrap_or(default);
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidInput(format!("{what} must be finite and nonnegative, got {v}")))
    }
}

/// Validated multiple-access setup.
#[derive(Debug, Clone)]
pub struct MacSetup {
    /// Channel with the file's powers (uniform ones when water-filling).
    pub config: ScenarioConfig,
    /// `Some(P)` when powers come from water-filling with budget `P`.
    pub waterfill: Option<f64>,
}

impl ScenarioFile {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("scenario file: {e}")))?;
        file.validate_common()?;
        Ok(file)
    }

    fn validate_common(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("N must be positive".into()));
        }
        if self.snr_db_grid.is_empty() || self.snr_db_grid.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("snr_db_grid must be a nonempty list of finite numbers".into()));
        }
        if self.transmitters.is_empty() {
            return Err(Error::InvalidInput("at least one transmitter is required".into()));
        }
        if let Some(mc) = &self.monte_carlo {
            if mc.trials == 0 {
                return Err(Error::InvalidInput("monte_carlo.trials must be positive".into()));
            }
        }
        if let Some(SolverSpec { tol: Some(t), .. }) = &self.solver {
            if !(*t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidInput(format!("solver.tol must be positive, got {t}")));
            }
        }
        if let Some(SolverSpec { max_iter: Some(0), .. }) = &self.solver {
            return Err(Error::InvalidInput("solver.max_iter must be positive".into()));
        }
        Ok(())
    }

    pub fn rhos(&self) -> Vec<f64> {
        self.snr_db_grid.iter().map(|s| rho_from_snr_db(*s)).collect()
    }

    pub fn solver_options(&self, tol_override: Option<f64>) -> SolverOptions {
        let mut opts = SolverOptions::default();
        if let Some(s) = &self.solver {
            if let Some(t) = s.tol {
                opts.tol = t;
            }
            if let Some(m) = s.max_iter {
                opts.max_outer = m;
            }
        }
        if let Some(t) = tol_override {
            opts.tol = t;
        }
        opts
    }

    pub fn mac_setup(&self) -> Result<MacSetup> {
        if self.model != Model::Mac {
            return Err(Error::InvalidInput("this command needs model \"mac\"".into()));
        }
        if self.links.is_some() {
            return Err(Error::InvalidInput("links are only used by the interference model".into()));
        }
        let mut builder = ScenarioBuilder::new(self.n);
        let mut modes = Vec::new();
        let mut uniform_total = 0.0;
        for (k, tx) in self.transmitters.iter().enumerate() {
            let label = format!("transmitter {}", k + 1);
            let n_streams = tx.n_streams.ok_or_else(|| Error::InvalidInput(format!("{label}: n_k is required")))?;
            if n_streams == 0 || n_streams > tx.n_antennas {
                return Err(Error::InvalidInput(format!("{label}: n_k = {n_streams} must be in 1..={}", tx.n_antennas)));
            }
            let (power, waterfill) = match &tx.power {
                None => (vec![1.0; n_streams], false),
                Some(PowerSpec::Mode(m)) if m == "uniform" => (vec![1.0; n_streams], false),
                Some(PowerSpec::Mode(m)) if m == "waterfill" => (vec![1.0; n_streams], true),
                Some(PowerSpec::Mode(m)) => return Err(Error::InvalidInput(format!("{label}: unknown power mode {m:?}"))),
                Some(PowerSpec::List(p)) if p.len() == n_streams => (p.clone(), false),
                Some(PowerSpec::List(p)) => {
                    return Err(Error::InvalidInput(format!("{label}: {} powers for {n_streams} streams", p.len())));
                }
            };
            uniform_total += power.iter().sum::<f64>() / n_streams as f64;
            modes.push(waterfill);
            let path_loss = positive_or_default(tx.path_loss, 1.0, &format!("{label}: path_loss"))?;
            let r = correlation(tx.receive_corr.as_ref(), self.n, &format!("{label}: receive_corr"))?;
            let t = correlation(tx.transmit_corr.as_ref(), tx.n_antennas, &format!("{label}: transmit_corr"))?;
            let link = KroneckerSpec::from_transmit_matrix(r, &t, path_loss).map_err(|e| e.context(label.clone()))?;
            builder = builder.kronecker(power, &link);
        }
        let waterfill = match (modes.iter().all(|m| *m), modes.iter().any(|m| *m)) {
            (true, _) => Some(positive_or_default(self.sum_power, uniform_total, "sum_power")?),
            (false, false) => None,
            (false, true) => {
                return Err(Error::InvalidInput("\"waterfill\" must be used by every transmitter or none".into()));
            }
        };
        Ok(MacSetup {
            config: builder.build()?,
            waterfill,
        })
    }

    /// Interference channel at the first grid point's noise power.
    pub fn interference_setup(&self) -> Result<InterferenceScenario> {
        if self.model != Model::Interference {
            return Err(Error::InvalidInput("this command needs model \"interference\"".into()));
        }
        if self.transmitters.len() != 2 {
            return Err(Error::InvalidInput("the interference model has exactly two transmitters".into()));
        }
        if self.sum_power.is_some() {
            return Err(Error::InvalidInput("sum_power is only used by the mac model".into()));
        }
        let links = self.links.as_ref().ok_or_else(|| Error::InvalidInput("links are required for the interference model".into()))?;
        if links.len() != 2 || links.iter().any(|row| row.len() != 2) {
            return Err(Error::InvalidInput("links must be a 2 x 2 list indexed [receiver][transmitter]".into()));
        }
        let mut transmit = Vec::new();
        for (k, tx) in self.transmitters.iter().enumerate() {
            let label = format!("transmitter {}", k + 1);
            if tx.n_streams.is_some() || tx.power.is_some() || tx.receive_corr.is_some() || tx.path_loss.is_some() {
                return Err(Error::InvalidInput(format!(
                    "{label}: only N_k and transmit_corr apply to interference transmitters; receive side goes in links"
                )));
            }
            transmit.push(correlation(tx.transmit_corr.as_ref(), tx.n_antennas, &format!("{label}: transmit_corr"))?);
        }
        let mut receive = Vec::new();
        let mut gains = [[1.0; 2]; 2];
        for (q, row) in links.iter().enumerate() {
            for (k, link) in row.iter().enumerate() {
                let label = format!("link ({}, {})", q + 1, k + 1);
                gains[q][k] = positive_or_default(link.path_loss, 1.0, &format!("{label}: path_loss"))?;
                receive.push(correlation(link.receive_corr.as_ref(), self.n, &format!("{label}: receive_corr"))?);
            }
        }
        let mut r = receive.into_iter();
        let mut next = || r.next().expect("four links");
        let receive = [[next(), next()], [next(), next()]];
        let mut t = transmit.into_iter();
        let transmit = [t.next().expect("two transmitters"), t.next().expect("two transmitters")];
        InterferenceScenario::with_path_gains(transmit, receive, gains, self.rhos()[0])
    }
}

// ---------------------------------------------------------------------------
// command line

#[derive(Debug, Parser)]
#[command(name = "detbeam", version, about = "Deterministic equivalents for Haar-precoded MIMO channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Deterministic mutual information, MMSE sum-rate and per-stream SINR per SNR.
    Solve(CommonArgs),
    /// Deterministic values next to Monte Carlo mean and spread.
    Validate(McArgs),
    /// Sum-rate over all stream-count pairs of a two-pair interference channel.
    Streams(McArgs),
    /// Like `solve`, with powers from sum-constrained water-filling.
    Waterfill(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario file (JSON).
    pub scenario: PathBuf,
    /// Report rates in bits instead of nats.
    #[arg(long)]
    pub bits: bool,
    /// Fixed-point tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Monte Carlo trials (overrides the scenario file).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Monte Carlo seed (overrides the scenario file).
    #[arg(long)]
    pub seed: Option<u64>,
}

fn num(x: f64) -> String {
    format!("{x:.15e}")
}

fn rate_unit(bits: bool) -> f64 {
    if bits {
        std::f64::consts::LOG2_E
    } else {
        1.0
    }
}

struct Csv {
    writer: csv::Writer<Vec<u8>>,
}

impl Csv {
    fn new() -> Self {
        Self {
            writer: csv::Writer::from_writer(Vec::new()),
        }
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|e| Error::InvalidInput(format!("csv: {e}")))
    }

    fn finish(self) -> Result<Vec<u8>> {
        self.writer.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))
    }
}

fn validate_tol(tol: Option<f64>) -> Result<()> {
    match tol {
        Some(t) if !(t > 0.0 && t.is_finite()) => Err(Error::InvalidInput(format!("--tol must be positive, got {t}"))),
        _ => Ok(()),
    }
}

/// Powers and water level at one noise power.
struct Allocation {
    config: ScenarioConfig,
    report: RateReport,
    water_level: Option<f64>,
    iterations: Option<usize>,
}

fn allocate(setup: &MacSetup, rho: f64, opts: &SolverOptions, force_waterfill: bool) -> Result<Allocation> {
    let budget = match (setup.waterfill, force_waterfill) {
        (Some(p), _) => Some(p),
        (None, true) => Some(setup.config.transmitters().iter().map(|t| t.power.iter().sum::<f64>() / t.n_streams() as f64).sum()),
        (None, false) => None,
    };
    match budget {
        None => Ok(Allocation {
            report: evaluate(&setup.config, rho, opts)?,
            config: setup.config.clone(),
            water_level: None,
            iterations: None,
        }),
        Some(total) => {
            let uniform: Vec<Vec<f64>> = setup.config.transmitters().iter().map(|t| vec![1.0; t.n_streams()]).collect();
            let base = setup.config.with_powers(&uniform)?;
            let wf_opts = WaterfillOptions {
                solver: *opts,
                ..WaterfillOptions::default()
            };
            let wf = waterfill_sum(&base, rho, total, &wf_opts)?;
            let config = base.with_powers(&wf.power_diags)?;
            Ok(Allocation {
                report: evaluate(&config, rho, opts)?,
                config,
                water_level: wf.water_level,
                iterations: Some(wf.iterations),
            })
        }
    }
}

fn allocation_header(config: &ScenarioConfig, header: &mut Vec<String>) {
    header.push("water_level".into());
    for k in 0..config.num_transmitters() {
        header.push(format!("power_{}", k + 1));
    }
    header.push("waterfill_iterations".into());
}

fn allocation_fields(a: &Allocation, row: &mut Vec<String>) {
    row.push(a.water_level.map_or_else(String::new, num));
    for tx in a.config.transmitters() {
        row.push(num(tx.power.first().copied().unwrap_or(0.0)));
    }
    row.push(a.iterations.map_or_else(String::new, |i| i.to_string()));
}

fn par_grid<T: Send>(rhos: &[f64], f: impl Fn(f64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    rhos.par_iter().map(|&rho| f(rho)).collect::<Vec<_>>().into_iter().collect()
}

fn cmd_solve(args: &CommonArgs, force_waterfill: bool) -> Result<Vec<u8>> {
    validate_tol(args.tol)?;
    let file = ScenarioFile::from_path(&args.scenario)?;
    let setup = file.mac_setup()?;
    let opts = file.solver_options(args.tol);
    let unit = rate_unit(args.bits);
    let rhos = file.rhos();
    let rows = par_grid(&rhos, |rho| allocate(&setup, rho, &opts, force_waterfill))?;
    let show_allocation = force_waterfill || setup.waterfill.is_some();

    let mut csv = Csv::new();
    let mut header: Vec<String> = ["snr_db", "rho", "det_mutual_info", "det_mmse_sumrate"].map(String::from).to_vec();
    for (k, tx) in setup.config.transmitters().iter().enumerate() {
        for j in 0..tx.n_streams() {
            header.push(format!("det_sinr_{}_{}", k + 1, j + 1));
        }
    }
    if show_allocation {
        allocation_header(&setup.config, &mut header);
    }
    csv.row(&header)?;
    for ((snr, rho), a) in file.snr_db_grid.iter().zip(&rhos).zip(&rows) {
        let mut row = vec![snr.to_string(), num(*rho), num(a.report.mutual_info * unit), num(a.report.mmse_sumrate * unit)];
        row.extend(a.report.mmse_sinr.iter().flatten().map(|s| num(*s)));
        if show_allocation {
            allocation_fields(a, &mut row);
        }
        csv.row(&row)?;
    }
    csv.finish()
}

fn mc_settings(file: &ScenarioFile, args: &McArgs) -> Result<(usize, u64)> {
    let trials = args.trials.or(file.monte_carlo.as_ref().map(|m| m.trials));
    let seed = args.seed.or(file.monte_carlo.as_ref().map(|m| m.seed));
    match (trials, seed) {
        (Some(0), _) => Err(Error::InvalidInput("--trials must be positive".into())),
        (Some(t), s) => Ok((t, s.unwrap_or(0))),
        (None, _) => Err(Error::InvalidInput("Monte Carlo trials missing: pass --trials or add monte_carlo to the scenario".into())),
    }
}

fn cmd_validate(args: &McArgs) -> Result<Vec<u8>> {
    validate_tol(args.common.tol)?;
    let file = ScenarioFile::from_path(&args.common.scenario)?;
    let setup = file.mac_setup()?;
    let (trials, seed) = mc_settings(&file, args)?;
    let opts = file.solver_options(args.common.tol);
    let unit = rate_unit(args.common.bits);
    let rhos = file.rhos();
    let rows = par_grid(&rhos, |rho| -> Result<(Allocation, TrialSummary, TrialSummary)> {
        let a = allocate(&setup, rho, &opts, false)?;
        // every grid point reuses the same seed, so all SNRs see the same draws
        let sweep = monte_carlo_sweep(&a.config, &[rho], trials, seed)?;
        let mi = summarize(&sweep[0], Metric::MutualInformation)?;
        let sr = summarize(&sweep[0], Metric::MmseSumRate)?;
        Ok((a, mi, sr))
    })?;

    let mut csv = Csv::new();
    let mut header: Vec<String> = vec!["snr_db".into(), "rho".into(), "trials".into()];
    for m in ["mutual_info", "mmse_sumrate"] {
        header.extend([
            format!("det_{m}"),
            format!("mc_{m}_mean"),
            format!("mc_{m}_std"),
            format!("{m}_abs_gap"),
            format!("{m}_rel_gap"),
        ]);
    }
    if setup.waterfill.is_some() {
        allocation_header(&setup.config, &mut header);
    }
    csv.row(&header)?;
    for ((snr, rho), (a, mi, sr)) in file.snr_db_grid.iter().zip(&rhos).zip(&rows) {
        let mut row = vec![snr.to_string(), num(*rho), trials.to_string()];
        for (det, mc) in [(a.report.mutual_info, mi), (a.report.mmse_sumrate, sr)] {
            let gap = (mc.mean - det).abs();
            row.extend([num(det * unit), num(mc.mean * unit), num(mc.std * unit), num(gap * unit), num(gap / det.abs())]);
        }
        if setup.waterfill.is_some() {
            allocation_fields(a, &mut row);
        }
        csv.row(&row)?;
    }
    csv.finish()
}

fn cmd_streams(args: &McArgs) -> Result<(Vec<u8>, bool)> {
    validate_tol(args.common.tol)?;
    let file = ScenarioFile::from_path(&args.common.scenario)?;
    let base = file.interference_setup()?;
    let opts = file.solver_options(args.common.tol);
    let unit = rate_unit(args.common.bits);
    // Monte Carlo columns only on request; a full grid is expensive
    let mc = match args.trials {
        Some(0) => return Err(Error::InvalidInput("--trials must be positive".into())),
        Some(t) => Some((t, args.seed.or(file.monte_carlo.as_ref().map(|m| m.seed)).unwrap_or(0))),
        None => None,
    };
    let rhos = file.rhos();
    type McCells = Option<Vec<Result<[TrialSummary; 2]>>>;
    let grids = par_grid(&rhos, |rho| -> Result<(StreamGridResult, McCells)> {
        let scenario = base.with_rho(rho)?;
        let grid = exhaustive_stream_search(&scenario, &opts);
        let mc_cells = mc.map(|(trials, seed)| {
            grid.cells
                .par_iter()
                .map(|c| ic_monte_carlo(&scenario, c.n1, c.n2, trials, seed))
                .collect::<Vec<_>>()
        });
        Ok((grid, mc_cells))
    })?;

    let mut csv = Csv::new();
    let mut header: Vec<String> = ["kind", "snr_db", "n1", "n2", "rate_1", "rate_2", "sum_rate", "status"].map(String::from).to_vec();
    if mc.is_some() {
        header.extend(["mc_rate_1", "mc_rate_2", "mc_sum_rate"].map(String::from));
    }
    csv.row(&header)?;
    let mut all_failed = false;
    for (snr, (grid, mc_cells)) in file.snr_db_grid.iter().zip(&grids) {
        for (i, cell) in grid.cells.iter().enumerate() {
            let mut row = vec!["cell".to_string(), snr.to_string(), cell.n1.to_string(), cell.n2.to_string()];
            match &cell.rates {
                Ok((a, b)) => row.extend([num(a * unit), num(b * unit), num((a + b) * unit), "ok".into()]),
                Err(e) => row.extend([String::new(), String::new(), String::new(), format!("error: {e}")]),
            }
            if let Some(cells) = mc_cells {
                match &cells[i] {
                    Ok([a, b]) => row.extend([num(a.mean * unit), num(b.mean * unit), num((a.mean + b.mean) * unit)]),
                    Err(_) => row.extend([String::new(), String::new(), String::new()]),
                }
            }
            csv.row(&row)?;
        }
        let mut row = vec!["argmax".to_string(), snr.to_string()];
        match grid.best {
            Some((n1, n2)) => {
                let (a, b) = grid.cell(n1, n2).rates.clone().expect("argmax cell succeeded");
                let status = if grid.any_failed { "ok (some cells failed)" } else { "ok" };
                row.extend([n1.to_string(), n2.to_string(), num(a * unit), num(b * unit), num(grid.best_value * unit), status.into()]);
            }
            None => {
                all_failed = true;
                row.extend([String::new(), String::new(), String::new(), String::new(), String::new(), "error: every cell failed".into()]);
            }
        }
        if mc.is_some() {
            row.extend([String::new(), String::new(), String::new()]);
        }
        csv.row(&row)?;
    }
    Ok((csv.finish()?, all_failed))
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("DETBEAM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::InvalidInput(format!("DETBEAM_THREADS must be a positive integer, got {v:?}")))?;
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

/// Runs the CLI with explicit streams; returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 {
                write!(stdout, "{e}")
            } else {
                write!(stderr, "{e}")
            };
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        let _ = writeln!(stderr, "error: {e}");
        return 1;
    }
    let (out_path, result) = match &cli.command {
        Command::Solve(a) => (a.out.clone(), cmd_solve(a, false).map(|b| (b, false))),
        Command::Waterfill(a) => (a.out.clone(), cmd_solve(a, true).map(|b| (b, false))),
        Command::Validate(a) => (a.common.out.clone(), cmd_validate(a).map(|b| (b, false))),
        Command::Streams(a) => (a.common.out.clone(), cmd_streams(a)),
    };
    let (bytes, all_failed) = match result {
        Ok(v) => v,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return exit_code(&e);
        }
    };
    let written = match out_path {
        Some(path) => std::fs::write(&path, &bytes).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => stdout.write_all(&bytes).map_err(|e| e.to_string()),
    };
    if let Err(msg) = written {
        let _ = writeln!(stderr, "error: {msg}");
        return 1;
    }
    if all_failed {
        let _ = writeln!(stderr, "error: every stream configuration failed for at least one SNR");
        return 2;
    }
    0
}
