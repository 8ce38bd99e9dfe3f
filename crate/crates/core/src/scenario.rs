//! Multiple-access channel description shared by the solver, the metrics
//! and the Monte Carlo sampler.
//!
//! Column covariances are stored as `scale * family[base]`. The family is the
//! finite set of distinct covariance shapes; a Kronecker channel maps every
//! column of transmitter `k` onto the same base (its receive correlation)
//! with scale `α_k t_kj`, so trace products are computed once per base.

use crate::correlation::{psd_eigenvalues, KroneckerSpec};
use crate::error::{Error, Result};
use crate::matrix::HermitianMatrix;

/// Covariance of one channel column: `scale * family[base]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnCovariance {
    pub base: usize,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transmitter {
    /// `N_k`, the number of transmit antennas (channel columns).
    pub n_antennas: usize,
    /// Diagonal of `P_k`; its length is the number of streams `n_k`.
    pub power: Vec<f64>,
    /// One entry per antenna, `columns.len() == n_antennas`.
    pub columns: Vec<ColumnCovariance>,
}

impl Transmitter {
    pub fn n_streams(&self) -> usize {
        self.power.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    n_rx: usize,
    family: Vec<HermitianMatrix>,
    transmitters: Vec<Transmitter>,
}

impl ScenarioConfig {
    pub fn new(n_rx: usize, family: Vec<HermitianMatrix>, transmitters: Vec<Transmitter>) -> Result<Self> {
        if n_rx == 0 {
            return Err(Error::InvalidInput("N must be positive".into()));
        }
        if transmitters.is_empty() {
            return Err(Error::InvalidInput("at least one transmitter is required".into()));
        }
        for r in &family {
            if r.dim() != n_rx {
                return Err(Error::DimensionMismatch {
                    expected: n_rx,
                    got: r.dim(),
                });
            }
            psd_eigenvalues(r)?;
        }
        for (k, tx) in transmitters.iter().enumerate() {
            let label = k + 1;
            if tx.n_antennas == 0 || tx.columns.len() != tx.n_antennas {
                return Err(Error::InvalidInput(format!(
                    "transmitter {label}: {} column covariances for {} antennas",
                    tx.columns.len(),
                    tx.n_antennas
                )));
            }
            if tx.power.is_empty() || tx.power.len() > tx.n_antennas {
                return Err(Error::InvalidInput(format!(
                    "transmitter {label}: stream count {} must be in 1..={}",
                    tx.power.len(),
                    tx.n_antennas
                )));
            }
            if let Some(p) = tx.power.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                return Err(Error::InvalidInput(format!("transmitter {label}: invalid power {p}")));
            }
            for col in &tx.columns {
                if col.base >= family.len() {
                    return Err(Error::InvalidInput(format!(
                        "transmitter {label}: covariance index {} out of range",
                        col.base
                    )));
                }
                if !(col.scale.is_finite() && col.scale >= 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "transmitter {label}: invalid covariance scale {}",
                        col.scale
                    )));
                }
            }
        }
        Ok(Self {
            n_rx,
            family,
            transmitters,
        })
    }

    /// Receive antennas `N`.
    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    /// Number of transmitters `K`.
    pub fn num_transmitters(&self) -> usize {
        self.transmitters.len()
    }

    pub fn transmitters(&self) -> &[Transmitter] {
        &self.transmitters
    }

    pub fn transmitter(&self, k: usize) -> &Transmitter {
        &self.transmitters[k]
    }

    pub fn family(&self) -> &[HermitianMatrix] {
        &self.family
    }

    /// `c_k = n_k / N_k`.
    pub fn c(&self, k: usize) -> f64 {
        let tx = &self.transmitters[k];
        tx.n_streams() as f64 / tx.n_antennas as f64
    }

    /// `c̄_k = N_k / N`.
    pub fn cbar(&self, k: usize) -> f64 {
        self.transmitters[k].n_antennas as f64 / self.n_rx as f64
    }

    /// Materializes `R_kj`.
    pub fn covariance(&self, k: usize, j: usize) -> HermitianMatrix {
        let col = self.transmitters[k].columns[j];
        self.family[col.base].scaled(col.scale)
    }

    pub fn powers(&self) -> Vec<Vec<f64>> {
        self.transmitters.iter().map(|t| t.power.clone()).collect()
    }

    /// Same channel, different power allocation (stream counts may change).
    pub fn with_powers(&self, powers: &[Vec<f64>]) -> Result<Self> {
        if powers.len() != self.transmitters.len() {
            return Err(Error::DimensionMismatch {
                expected: self.transmitters.len(),
                got: powers.len(),
            });
        }
        let transmitters = self
            .transmitters
            .iter()
            .zip(powers)
            .map(|(tx, p)| Transmitter {
                power: p.clone(),
                ..tx.clone()
            })
            .collect();
        Self::new(self.n_rx, self.family.clone(), transmitters)
    }

    /// Keeps only the listed transmitters (in the given order).
    pub fn subset(&self, keep: &[usize]) -> Result<Self> {
        let transmitters = keep.iter().map(|&k| self.transmitters[k].clone()).collect();
        Self::new(self.n_rx, self.family.clone(), transmitters)
    }
}

/// Incremental construction with covariance deduplication.
#[derive(Debug, Clone)]
pub struct ScenarioBuilder {
    n_rx: usize,
    family: Vec<HermitianMatrix>,
    transmitters: Vec<Transmitter>,
}

impl ScenarioBuilder {
    pub fn new(n_rx: usize) -> Self {
        Self {
            n_rx,
            family: Vec::new(),
            transmitters: Vec::new(),
        }
    }

    fn intern(&mut self, r: &HermitianMatrix) -> usize {
        if let Some(i) = self.family.iter().position(|m| m == r) {
            return i;
        }
        self.family.push(r.clone());
        self.family.len() - 1
    }

    /// Transmitter with explicit per-column covariances `R_kj`.
    pub fn transmitter(mut self, power: Vec<f64>, covariances: &[HermitianMatrix]) -> Self {
        let columns = covariances
            .iter()
            .map(|r| ColumnCovariance {
                base: self.intern(r),
                scale: 1.0,
            })
            .collect();
        self.transmitters.push(Transmitter {
            n_antennas: covariances.len(),
            power,
            columns,
        });
        self
    }

    /// Transmitter over a Kronecker channel; columns share the receive correlation.
    pub fn kronecker(mut self, power: Vec<f64>, spec: &KroneckerSpec) -> Self {
        let base = self.intern(&spec.receive_corr);
        let columns = spec
            .transmit_corr_diag
            .iter()
            .map(|t| ColumnCovariance {
                base,
                scale: spec.path_loss * t,
            })
            .collect();
        self.transmitters.push(Transmitter {
            n_antennas: spec.transmit_corr_diag.len(),
            power,
            columns,
        });
        self
    }

    pub fn build(self) -> Result<ScenarioConfig> {
        ScenarioConfig::new(self.n_rx, self.family, self.transmitters)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratios_and_dedup() {
        let r = HermitianMatrix::identity(4);
        let cfg = ScenarioBuilder::new(4)
            .transmitter(vec![1.0, 1.0], &[r.clone(), r.clone(), r.clone()])
            .kronecker(
                vec![2.0],
                &KroneckerSpec {
                    receive_corr: r.clone(),
                    transmit_corr_diag: vec![1.0, 0.5],
                    path_loss: 0.5,
                },
            )
            .build()
            .unwrap();
        assert_eq!(cfg.family().len(), 1);
        assert_eq!(cfg.num_transmitters(), 2);
        assert!((cfg.c(0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((cfg.cbar(0) - 0.75).abs() < 1e-15);
        assert!((cfg.cbar(1) - 0.5).abs() < 1e-15);
        assert_eq!(cfg.covariance(1, 1), r.scaled(0.25));
    }

    #[test]
    fn rejects_invalid() {
        let r = HermitianMatrix::identity(2);
        // more streams than antennas
        assert!(ScenarioBuilder::new(2).transmitter(vec![1.0, 1.0], std::slice::from_ref(&r)).build().is_err());
        // negative power
        assert!(ScenarioBuilder::new(2).transmitter(vec![-1.0], std::slice::from_ref(&r)).build().is_err());
        // wrong dimension
        assert!(ScenarioBuilder::new(3).transmitter(vec![1.0], std::slice::from_ref(&r)).build().is_err());
        // indefinite covariance
        let bad = HermitianMatrix::from_real_diagonal(&[1.0, -1.0]);
        assert!(ScenarioBuilder::new(2).transmitter(vec![1.0], &[bad]).build().is_err());
        // no transmitters
        assert!(ScenarioBuilder::new(2).build().is_err());
    }
}
