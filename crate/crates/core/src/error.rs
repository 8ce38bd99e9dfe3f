use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Which fixed-point equation a convergence failure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Equation {
    /// Power-side equation for the `k`-th transmitter's `gbar`.
    Gbar { k: usize },
    /// Covariance-side `delta` system.
    Delta,
    /// The outer loop over `g` (all three equations jointly).
    Outer,
    /// Iterative water-filling over transmit powers.
    WaterFilling,
}

impl std::fmt::Display for Equation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Equation::Gbar { k } => write!(f, "gbar equation (transmitter {})", k + 1),
            Equation::Delta => write!(f, "delta equation"),
            Equation::Outer => write!(f, "outer g/gbar/delta iteration"),
            Equation::WaterFilling => write!(f, "iterative water-filling"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e}, scale {scale:e})")]
    NotPsd { eigenvalue: f64, scale: f64 },

    #[error("matrix is not positive definite")]
    NotPd,

    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{equation} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        equation: Equation,
        iterations: usize,
        residual: f64,
        /// Residuals of the gbar, g and delta equations at the last iterate.
        per_equation: Option<[f64; 3]>,
    },

    #[error("gbar iterate {value:e} left the admissible interval [0, {bound:e}] for transmitter {}", k + 1)]
    BracketViolation { k: usize, value: f64, bound: f64 },

    #[error("logarithm or ratio argument {value:e} is not positive in {context}")]
    Domain { context: &'static str, value: f64 },

    #[error("every transmitter has g = 0; no water level exists")]
    AllSilent,

    #[error("water-filling did not converge after {iterations} iterations (last change {last_change:e})")]
    WaterfillNoConvergence {
        iterations: usize,
        last_change: f64,
        /// Per-iteration power allocations, `trajectory[t][k][j]`.
        trajectory: Vec<Vec<Vec<f64>>>,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with all context layers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of an iterative numerical method (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        if let Error::Context { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::BracketViolation { .. }
                | Error::Domain { .. }
                | Error::AllSilent
                | Error::WaterfillNoConvergence { .. }
                | Error::NotPd
                | Error::NotPsd { .. }
        )
    }
}
