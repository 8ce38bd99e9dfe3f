//! Stream control for a two-pair interference channel.
//!
//! Receiver `q` sees `y_q = Σ_k H_qk W_k x_k + n_q` with
//! `H_qk = sqrt(a_qk) R_qk^{1/2} U_qk T_k^{1/2}` and treats the other pair as
//! noise. Its rate is the difference of two log-det terms, each replaced by
//! its deterministic equivalent:
//!
//! ```text
//! Ī_q = Ī[both transmitters at receiver q] − Ī[interferer only at receiver q]
//! ```
//!
//! Transmitter `k` sends `n_k` streams at power `N_k / n_k` each.

use rayon::prelude::*;

use crate::correlation::{psd_eigenvalues, KroneckerSpec};
use crate::error::{Error, Result};
use crate::fixed_point::SolverOptions;
use crate::matrix::HermitianMatrix;
use crate::metrics::mutual_information_at;
use crate::scenario::{ScenarioBuilder, ScenarioConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceScenario {
    n_rx: usize,
    transmit_corr: [HermitianMatrix; 2],
    /// Eigenvalues of `transmit_corr[k]`.
    transmit_eig: [Vec<f64>; 2],
    /// `receive_corr[q][k]` is `R_qk`.
    receive_corr: [[HermitianMatrix; 2]; 2],
    /// `path_gain[q][k]` scales link `(q, k)`.
    path_gain: [[f64; 2]; 2],
    pub rho: f64,
}

impl InterferenceScenario {
    pub fn new(transmit_corr: [HermitianMatrix; 2], receive_corr: [[HermitianMatrix; 2]; 2], rho: f64) -> Result<Self> {
        Self::with_path_gains(transmit_corr, receive_corr, [[1.0; 2]; 2], rho)
    }

    pub fn with_path_gains(
        transmit_corr: [HermitianMatrix; 2],
        receive_corr: [[HermitianMatrix; 2]; 2],
        path_gain: [[f64; 2]; 2],
        rho: f64,
    ) -> Result<Self> {
        let n_rx = receive_corr[0][0].dim();
        for r in receive_corr.iter().flatten() {
            if r.dim() != n_rx {
                return Err(Error::DimensionMismatch {
                    expected: n_rx,
                    got: r.dim(),
                });
            }
            psd_eigenvalues(r)?;
        }
        if let Some(a) = path_gain.iter().flatten().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::InvalidInput(format!("path gain must be nonnegative, got {a}")));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidInput(format!("noise power must be positive, got {rho}")));
        }
        let transmit_eig = [psd_eigenvalues(&transmit_corr[0])?, psd_eigenvalues(&transmit_corr[1])?];
        Ok(Self {
            n_rx,
            transmit_corr,
            transmit_eig,
            receive_corr,
            path_gain,
            rho,
        })
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    /// `[N_1, N_2]`.
    pub fn n_tx(&self) -> [usize; 2] {
        [self.transmit_corr[0].dim(), self.transmit_corr[1].dim()]
    }

    pub fn transmit_corr(&self, k: usize) -> &HermitianMatrix {
        &self.transmit_corr[k]
    }

    pub fn receive_corr(&self, q: usize, k: usize) -> &HermitianMatrix {
        &self.receive_corr[q][k]
    }

    pub fn path_gain(&self, q: usize, k: usize) -> f64 {
        self.path_gain[q][k]
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::with_path_gains(self.transmit_corr.clone(), self.receive_corr.clone(), self.path_gain, rho)
    }

    fn link(&self, q: usize, k: usize) -> KroneckerSpec {
        KroneckerSpec {
            receive_corr: self.receive_corr[q][k].clone(),
            transmit_corr_diag: self.transmit_eig[k].clone(),
            path_loss: self.path_gain[q][k],
        }
    }

    /// MAC seen by receiver `q` from the listed transmitters.
    pub fn receiver_config(&self, q: usize, streams: [usize; 2], transmitters: &[usize]) -> Result<ScenarioConfig> {
        let n_tx = self.n_tx();
        let mut builder = ScenarioBuilder::new(self.n_rx);
        for &k in transmitters {
            builder = builder.kronecker(stream_power_matrix(n_tx[k], streams[k])?, &self.link(q, k));
        }
        builder.build()
    }
}

/// Active-stream block of `P_k = (N_k / n_k) diag(1, …, 1, 0, …, 0)`.
pub fn stream_power_matrix(n_antennas: usize, n_streams: usize) -> Result<Vec<f64>> {
    if n_streams == 0 || n_streams > n_antennas {
        return Err(Error::InvalidInput(format!("stream count {n_streams} must be in 1..={n_antennas}")));
    }
    Ok(vec![n_antennas as f64 / n_streams as f64; n_streams])
}

fn validate_streams(scenario: &InterferenceScenario, streams: [usize; 2]) -> Result<()> {
    for (k, (&n, &cap)) in streams.iter().zip(&scenario.n_tx()).enumerate() {
        if n == 0 || n > cap {
            return Err(Error::InvalidInput(format!("n_{} = {n} must be in 1..={cap}", k + 1)));
        }
    }
    Ok(())
}

/// `(Ī_1, Ī_2)` at stream counts `(n_1, n_2)`. Each of the four log-det terms
/// is an independent fixed-point solve.
pub fn ic_rate_pair(scenario: &InterferenceScenario, n1: usize, n2: usize, opts: &SolverOptions) -> Result<(f64, f64)> {
    let streams = [n1, n2];
    validate_streams(scenario, streams)?;
    let term = |q: usize, transmitters: &[usize]| -> Result<f64> {
        let label = if transmitters.len() == 2 {
            format!("receiver {}, both transmitters", q + 1)
        } else {
            format!("receiver {}, interferer only", q + 1)
        };
        scenario
            .receiver_config(q, streams, transmitters)
            .and_then(|cfg| mutual_information_at(&cfg, scenario.rho, opts))
            .map_err(|e| e.context(label))
    };
    let i1 = term(0, &[0, 1])? - term(0, &[1])?;
    let i2 = term(1, &[0, 1])? - term(1, &[0])?;
    Ok((i1, i2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamCell {
    pub n1: usize,
    pub n2: usize,
    /// `(Ī_1, Ī_2)`, or the failure message for this cell.
    pub rates: std::result::Result<(f64, f64), String>,
}

impl StreamCell {
    pub fn weighted_sum(&self, weights: [f64; 2]) -> Option<f64> {
        self.rates.as_ref().ok().map(|(a, b)| weights[0] * a + weights[1] * b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamGridResult {
    pub n_tx: [usize; 2],
    /// Row-major over `n_1`, then `n_2`, both starting at one.
    pub cells: Vec<StreamCell>,
    /// Argmax over successful cells; `None` if every cell failed.
    pub best: Option<(usize, usize)>,
    pub best_value: f64,
    pub any_failed: bool,
}

impl StreamGridResult {
    pub fn cell(&self, n1: usize, n2: usize) -> &StreamCell {
        &self.cells[(n1 - 1) * self.n_tx[1] + (n2 - 1)]
    }
}

/// Evaluates every `(n_1, n_2)` and maximizes the sum-rate. Ties go to the
/// lexicographically smallest `(n_1, n_2)`.
pub fn exhaustive_stream_search(scenario: &InterferenceScenario, opts: &SolverOptions) -> StreamGridResult {
    weighted_stream_search(scenario, [1.0, 1.0], opts)
}

/// As [`exhaustive_stream_search`] with objective `w_1 Ī_1 + w_2 Ī_2`.
pub fn weighted_stream_search(scenario: &InterferenceScenario, weights: [f64; 2], opts: &SolverOptions) -> StreamGridResult {
    let n_tx = scenario.n_tx();
    let index: Vec<(usize, usize)> = (1..=n_tx[0]).flat_map(|a| (1..=n_tx[1]).map(move |b| (a, b))).collect();
    let cells: Vec<StreamCell> = index
        .par_iter()
        .map(|&(n1, n2)| StreamCell {
            n1,
            n2,
            rates: ic_rate_pair(scenario, n1, n2, opts).map_err(|e| e.to_string()),
        })
        .collect();
    let mut best = None;
    let mut best_value = f64::NEG_INFINITY;
    for cell in &cells {
        if let Some(v) = cell.weighted_sum(weights) {
            // strict comparison keeps the first (smallest) index on ties
            if v > best_value {
                best_value = v;
                best = Some((cell.n1, cell.n2));
            }
        }
    }
    let any_failed = cells.iter().any(|c| c.rates.is_err());
    StreamGridResult {
        n_tx,
        cells,
        best,
        best_value,
        any_failed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::{jakes_correlation, JakesParams};
    use std::f64::consts::PI;

    fn jakes(a: f64, b: f64, dim: usize) -> HermitianMatrix {
        jakes_correlation(&JakesParams::new(a, b, 1.0, dim)).unwrap().matrix
    }

    fn symmetric(n: usize, nt: usize, rho: f64) -> InterferenceScenario {
        let t = jakes(0.0, PI / 2.0, nt);
        let direct = jakes(-PI / 4.0, 0.0, n);
        let cross = jakes(0.0, PI / 3.0, n);
        InterferenceScenario::new([t.clone(), t], [[direct.clone(), cross.clone()], [cross, direct]], rho).unwrap()
    }

    #[test]
    fn stream_powers_are_normalized() {
        assert_eq!(stream_power_matrix(10, 10).unwrap(), vec![1.0; 10]);
        assert_eq!(stream_power_matrix(10, 1).unwrap(), vec![10.0]);
        let p = stream_power_matrix(10, 4).unwrap();
        assert_eq!(p, vec![2.5; 4]);
        assert!((p.iter().sum::<f64>() / 10.0 - 1.0).abs() < 1e-15);
        assert!(stream_power_matrix(3, 0).is_err());
        assert!(stream_power_matrix(3, 4).is_err());
    }

    #[test]
    fn symmetric_pairs_have_equal_rates() {
        let sc = symmetric(4, 3, 0.5);
        let opts = SolverOptions::with_tol(1e-12);
        let (a, b) = ic_rate_pair(&sc, 2, 2, &opts).unwrap();
        assert!((a - b).abs() < 1e-9);
        let grid = exhaustive_stream_search(&sc, &opts);
        for n1 in 1..=3 {
            for n2 in 1..=3 {
                let s = |c: &StreamCell| c.weighted_sum([1.0, 1.0]).unwrap();
                assert!((s(grid.cell(n1, n2)) - s(grid.cell(n2, n1))).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn silent_interferer_reduces_to_single_user() {
        let t = jakes(0.0, PI / 2.0, 3);
        let r = jakes(-PI / 4.0, 0.0, 4);
        let sc = InterferenceScenario::with_path_gains(
            [t.clone(), t],
            [[r.clone(), r.clone()], [r.clone(), r]],
            [[1.0, 0.0], [0.0, 1.0]],
            0.3,
        )
        .unwrap();
        let opts = SolverOptions::with_tol(1e-12);
        let (i1, _) = ic_rate_pair(&sc, 2, 3, &opts).unwrap();
        let alone = sc.receiver_config(0, [2, 3], &[0]).unwrap();
        let want = mutual_information_at(&alone, 0.3, &opts).unwrap();
        assert!((i1 - want).abs() < 1e-10);
        // without interference every transmitter should use all its antennas
        let grid = exhaustive_stream_search(&sc, &opts);
        assert_eq!(grid.best, Some((3, 3)));
        assert!(!grid.any_failed);
    }

    #[test]
    fn stronger_interference_never_helps() {
        let t = jakes(0.0, PI / 2.0, 3);
        let r = jakes(-PI / 4.0, PI / 4.0, 4);
        let opts = SolverOptions::with_tol(1e-12);
        let mut prev = f64::INFINITY;
        for gain in [0.0, 0.25, 1.0, 4.0] {
            let sc = InterferenceScenario::with_path_gains(
                [t.clone(), t.clone()],
                [[r.clone(), r.clone()], [r.clone(), r.clone()]],
                [[1.0, gain], [gain, 1.0]],
                0.1,
            )
            .unwrap();
            let (i1, _) = ic_rate_pair(&sc, 2, 2, &opts).unwrap();
            assert!(i1 <= prev + 1e-12);
            prev = i1;
        }
    }

    #[test]
    fn invalid_stream_counts_rejected() {
        let sc = symmetric(4, 3, 1.0);
        assert!(ic_rate_pair(&sc, 0, 1, &SolverOptions::default()).is_err());
        assert!(ic_rate_pair(&sc, 1, 4, &SolverOptions::default()).is_err());
    }
}
