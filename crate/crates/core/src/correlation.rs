//! Antenna correlation models: the generalized Jake's model and the
//! reduction of a Kronecker channel to per-column covariances.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::matrix::{HermitianMatrix, C64, PSD_TOL};

/// Angular spread and array geometry for one end of a link.
///
/// `spacing` is the inter-element distance in wavelengths per index step, so
/// elements `i` and `j` are `spacing * (i - j)` wavelengths apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JakesParams {
    pub theta_min: f64,
    pub theta_max: f64,
    pub spacing: f64,
    pub dim: usize,
}

impl JakesParams {
    pub fn new(theta_min: f64, theta_max: f64, spacing: f64, dim: usize) -> Self {
        Self {
            theta_min,
            theta_max,
            spacing,
            dim,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.theta_min.is_finite() && self.theta_max.is_finite() && self.spacing.is_finite()) {
            return Err(Error::InvalidInput("Jake's parameters must be finite".into()));
        }
        if self.theta_min > self.theta_max {
            return Err(Error::InvalidInput(format!(
                "theta_min ({}) exceeds theta_max ({})",
                self.theta_min, self.theta_max
            )));
        }
        if self.spacing < 0.0 {
            return Err(Error::InvalidInput("antenna spacing must be nonnegative".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidInput("correlation dimension must be positive".into()));
        }
        Ok(())
    }
}

/// Output of [`jakes_correlation`].
#[derive(Debug, Clone, PartialEq)]
pub struct JakesCorrelation {
    pub matrix: HermitianMatrix,
    /// Set when `theta_min == theta_max`: the angular average collapses to
    /// the integrand evaluated at that single angle.
    pub degenerate: bool,
}

const GL_ORDER: usize = 32;
const INITIAL_PANELS: usize = 2;
const MAX_PANELS: usize = 1 << 14;
const QUADRATURE_TOL: f64 = 1e-10;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and its derivative.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(GL_ORDER))
}

/// Mean of `exp(i * freq * cos(theta))` over `[a, b]` with a composite
/// Gauss-Legendre rule, doubling the panel count until two successive
/// estimates agree to `1e-10`.
fn angular_average(freq: f64, a: f64, b: f64) -> C64 {
    let (nodes, weights) = gl_rule();
    let composite = |panels: usize| -> C64 {
        let h = (b - a) / panels as f64;
        let mut acc = C64::new(0.0, 0.0);
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for (x, w) in nodes.iter().zip(weights) {
                let theta = mid + 0.5 * h * x;
                acc += C64::from_polar(*w, freq * theta.cos());
            }
        }
        // sum of weights per panel is 2, so divide by 2 * panels
        acc / (2.0 * panels as f64)
    };
    let mut panels = INITIAL_PANELS;
    let mut prev = composite(panels);
    while panels < MAX_PANELS {
        panels *= 2;
        let next = composite(panels);
        if (next - prev).norm() < QUADRATURE_TOL {
            return next;
        }
        prev = next;
    }
    prev
}

/// Generalized Jake's correlation matrix:
/// `[A]_ij = 1/(θmax-θmin) ∫ exp(i 2π spacing (i-j) cos θ) dθ`.
pub fn jakes_correlation(params: &JakesParams) -> Result<JakesCorrelation> {
    params.validate()?;
    let n = params.dim;
    let degenerate = params.theta_min == params.theta_max;
    // entries only depend on the index offset i - j
    let offsets: Vec<C64> = (0..n)
        .map(|m| {
            if m == 0 {
                return C64::new(1.0, 0.0);
            }
            let freq = 2.0 * PI * params.spacing * m as f64;
            if degenerate {
                C64::from_polar(1.0, freq * params.theta_min.cos())
            } else {
                angular_average(freq, params.theta_min, params.theta_max)
            }
        })
        .collect();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        if i >= j {
            offsets[i - j]
        } else {
            offsets[j - i].conj()
        }
    });
    Ok(JakesCorrelation {
        matrix: HermitianMatrix::from_hermitian_unchecked(m),
        degenerate,
    })
}

/// Kronecker channel `sqrt(α) R^{1/2} U T^{1/2}` with diagonal `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct KroneckerSpec {
    pub receive_corr: HermitianMatrix,
    pub transmit_corr_diag: Vec<f64>,
    pub path_loss: f64,
}

impl KroneckerSpec {
    /// Diagonalizes a general Hermitian transmit correlation; only its
    /// eigenvalues matter under Haar precoding.
    pub fn from_transmit_matrix(receive_corr: HermitianMatrix, transmit_corr: &HermitianMatrix, path_loss: f64) -> Result<Self> {
        Ok(Self {
            receive_corr,
            transmit_corr_diag: psd_eigenvalues(transmit_corr)?,
            path_loss,
        })
    }
}

/// Eigenvalues of a PSD matrix with tiny negative values clamped to zero.
pub fn psd_eigenvalues(a: &HermitianMatrix) -> Result<Vec<f64>> {
    let values = a.eigenvalues();
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if let Some(&min) = values.first() {
        if min < -PSD_TOL * scale {
            return Err(Error::NotPsd { eigenvalue: min, scale });
        }
    }
    Ok(values.into_iter().map(|v| v.max(0.0)).collect())
}

/// Per-column covariances `R_kj = α t_kj R_k` of a Kronecker channel.
pub fn kronecker_to_columns(spec: &KroneckerSpec) -> Result<Vec<HermitianMatrix>> {
    if spec.path_loss < 0.0 || !spec.path_loss.is_finite() {
        return Err(Error::InvalidInput("path loss must be finite and nonnegative".into()));
    }
    if let Some(t) = spec.transmit_corr_diag.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidInput(format!("transmit correlation eigenvalue {t} is negative")));
    }
    Ok(spec
        .transmit_corr_diag
        .iter()
        .map(|t| spec.receive_corr.scaled(spec.path_loss * t))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(GL_ORDER);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // degree 62 monomial is exact for a 32-point rule
        let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(62)).sum();
        assert!((approx - 2.0 / 63.0).abs() < 1e-14);
        let (x3, w3) = gauss_legendre(3);
        assert!((x3[2] - (0.6f64).sqrt()).abs() < 1e-15);
        assert!((w3[1] - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn unit_diagonal_and_hermitian() {
        let c = jakes_correlation(&JakesParams::new(-PI / 4.0, PI / 3.0, 4.0, 6)).unwrap();
        assert!(!c.degenerate);
        for i in 0..6 {
            assert_eq!(c.matrix.get(i, i), C64::new(1.0, 0.0));
        }
        assert!(c.matrix.is_hermitian());
    }

    #[test]
    fn zero_spacing_is_all_ones() {
        let c = jakes_correlation(&JakesParams::new(0.0, 1.0, 0.0, 4)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((c.matrix.get(i, j) - C64::new(1.0, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn symmetric_interval_is_real() {
        // over [0, π] the average is the Bessel function J0(2π spacing m)
        let c = jakes_correlation(&JakesParams::new(0.0, PI, 0.5, 3)).unwrap();
        assert!(c.matrix.get(1, 0).im.abs() < 1e-12);
        // J0(π) = -0.30424217764409...
        assert!((c.matrix.get(1, 0).re - (-0.304_242_177_644_093_9)).abs() < 1e-10);
    }

    #[test]
    fn degenerate_angles_flagged() {
        let c = jakes_correlation(&JakesParams::new(0.3, 0.3, 1.0, 3)).unwrap();
        assert!(c.degenerate);
        let want = C64::from_polar(1.0, 2.0 * PI * 0.3f64.cos());
        assert!((c.matrix.get(1, 0) - want).norm() < 1e-14);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(jakes_correlation(&JakesParams::new(1.0, 0.0, 1.0, 3)).is_err());
        assert!(jakes_correlation(&JakesParams::new(0.0, 1.0, -1.0, 3)).is_err());
        assert!(jakes_correlation(&JakesParams::new(0.0, 1.0, 1.0, 0)).is_err());
    }

    #[test]
    fn kronecker_scaling() {
        let r = HermitianMatrix::identity(3);
        let cols = kronecker_to_columns(&KroneckerSpec {
            receive_corr: r.clone(),
            transmit_corr_diag: vec![1.0, 1.0, 1.0],
            path_loss: 1.0,
        })
        .unwrap();
        assert_eq!(cols.len(), 3);
        assert!(cols.iter().all(|c| *c == r));

        let rk = jakes_correlation(&JakesParams::new(0.0, 1.0, 2.0, 3)).unwrap().matrix;
        let cols = kronecker_to_columns(&KroneckerSpec {
            receive_corr: rk.clone(),
            transmit_corr_diag: vec![2.0, 0.0],
            path_loss: 1.0,
        })
        .unwrap();
        assert_eq!(cols[0], rk.scaled(2.0));
        assert_eq!(cols[1], HermitianMatrix::zeros(3));

        assert!(kronecker_to_columns(&KroneckerSpec {
            receive_corr: rk,
            transmit_corr_diag: vec![-1.0],
            path_loss: 1.0,
        })
        .is_err());
    }
}
