//! Reference scenarios built from the generalized Jake's model.
//!
//! Both use ten receive antennas. Transmit arrays have a spacing of four
//! wavelengths per element.

use std::f64::consts::PI;

use crate::correlation::{jakes_correlation, JakesParams, KroneckerSpec};
use crate::error::Result;
use crate::matrix::HermitianMatrix;
use crate::scenario::{ScenarioBuilder, ScenarioConfig};
use crate::stream_control::InterferenceScenario;

fn jakes(theta_min: f64, theta_max: f64, spacing: f64, dim: usize) -> Result<HermitianMatrix> {
    Ok(jakes_correlation(&JakesParams::new(theta_min, theta_max, spacing, dim))?.matrix)
}

/// One transmitter of the three-user MAC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacUser {
    pub n_antennas: usize,
    pub n_streams: usize,
    pub transmit_angles: (f64, f64),
    pub receive_angles: (f64, f64),
    pub path_loss: f64,
}

pub const MAC_RX: usize = 10;
pub const MAC_RX_SPACING: f64 = 8.0;
pub const TX_SPACING: f64 = 4.0;

pub const MAC_USERS: [MacUser; 3] = [
    MacUser {
        n_antennas: 10,
        n_streams: 8,
        transmit_angles: (0.0, PI / 2.0),
        receive_angles: (-PI / 4.0, 0.0),
        path_loss: 1.0,
    },
    MacUser {
        n_antennas: 5,
        n_streams: 4,
        transmit_angles: (-PI / 4.0, PI / 4.0),
        receive_angles: (0.0, PI / 3.0),
        path_loss: 0.5,
    },
    MacUser {
        n_antennas: 5,
        n_streams: 4,
        transmit_angles: (-PI / 2.0, 0.0),
        receive_angles: (-PI / 3.0, PI / 3.0),
        path_loss: 0.5,
    },
];

/// Kronecker links of the three-user MAC, in transmitter order.
pub fn three_user_mac_links() -> Result<Vec<KroneckerSpec>> {
    MAC_USERS
        .iter()
        .map(|u| {
            let r = jakes(u.receive_angles.0, u.receive_angles.1, MAC_RX_SPACING, MAC_RX)?;
            let t = jakes(u.transmit_angles.0, u.transmit_angles.1, TX_SPACING, u.n_antennas)?;
            KroneckerSpec::from_transmit_matrix(r, &t, u.path_loss)
        })
        .collect()
}

/// Three-user MAC with unit power on every stream.
pub fn three_user_mac() -> Result<ScenarioConfig> {
    let mut builder = ScenarioBuilder::new(MAC_RX);
    for (u, link) in MAC_USERS.iter().zip(three_user_mac_links()?) {
        builder = builder.kronecker(vec![1.0; u.n_streams], &link);
    }
    builder.build()
}

pub const IC_RX: usize = 10;
pub const IC_TX: [usize; 2] = [10, 10];
pub const IC_SPACING: f64 = 4.0;
/// Transmit angular spread of transmitter `k`.
pub const IC_TRANSMIT_ANGLES: [(f64, f64); 2] = [(0.0, PI / 2.0), (-PI / 2.0, 0.0)];
/// Receive angular spread of link `(q, k)`.
pub const IC_RECEIVE_ANGLES: [[(f64, f64); 2]; 2] = [[(-PI / 4.0, 0.0), (0.0, PI / 4.0)], [(-PI / 3.0, 0.0), (0.0, PI / 3.0)]];

/// Two-pair interference channel at noise power `rho`.
pub fn two_pair_interference(rho: f64) -> Result<InterferenceScenario> {
    let t = |k: usize| jakes(IC_TRANSMIT_ANGLES[k].0, IC_TRANSMIT_ANGLES[k].1, IC_SPACING, IC_TX[k]);
    let r = |q: usize, k: usize| jakes(IC_RECEIVE_ANGLES[q][k].0, IC_RECEIVE_ANGLES[q][k].1, IC_SPACING, IC_RX);
    InterferenceScenario::new([t(0)?, t(1)?], [[r(0, 0)?, r(0, 1)?], [r(1, 0)?, r(1, 1)?]], rho)
}

/// `ρ = 10^(−SNR/10)`.
pub fn rho_from_snr_db(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

pub fn snr_db_from_rho(rho: f64) -> f64 {
    -10.0 * rho.log10()
}
