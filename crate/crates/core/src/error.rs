use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),

    /// Norm too large for the exponential to be represented at working precision.
    #[error("matrix exponential overflow (1-norm {norm:.3e})")]
    Overflow { norm: f64 },

    #[error("matrix is singular or ill-conditioned (condition estimate {cond:.3e})")]
    Singular { cond: f64 },

    #[error("degenerate disentangling denominator at eps={epsilon}, mu+={mu_plus}, mu-={mu_minus}")]
    DegenerateDisentangle {
        epsilon: f64,
        mu_plus: Complex64,
        mu_minus: Complex64,
    },

    #[error("ln(v0) is ambiguous: v0 = {0} lies on the negative real axis")]
    BranchCut(Complex64),

    #[error("v0 vanishes; transformed Hamiltonian undefined")]
    ZeroVZero,

    #[error("similarity sign unresolved (residuals +i: {plus:.3e}, -i: {minus:.3e})")]
    SignUnresolved { plus: f64, minus: f64 },

    #[error("truncation inadequate: {reason} (n_trunc {n_trunc})")]
    TruncationInadequate { reason: String, n_trunc: usize },

    #[error("degenerate state: eta-norm {0:.3e}")]
    DegenerateState(f64),

    /// Running error bound of a wide-precision transport exceeded the tolerance.
    #[error("ill-conditioned transport: error bound {bound:.3e} exceeds {tol:.3e}")]
    IllConditioned { bound: f64, tol: f64 },

    #[error("negative variance {0:.3e}")]
    NegativeVariance(f64),
}
