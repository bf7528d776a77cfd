//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not Hermitian: relative symmetry defect {defect:.3e} exceeds {tol:.1e}")]
    NotHermitian { defect: f64, tol: f64 },

    #[error("matrix is not positive definite: eigenvalue {eigenvalue:.6e} <= 0")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("scale exponent {sigma} outside [-1, 1]")]
    ScaleOutOfRange { sigma: f64 },

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("not uniformly quasi-coercive on sample (beta ladder exhausted at cap {cap})")]
    NotQuasiCoercive { cap: f64 },

    #[error("form paths live on different spaces or horizons")]
    IncompatiblePaths,

    #[error("lambda = {lambda} lies inside the sector of half-angle {theta}")]
    InsideSector { lambda: num_complex::Complex<f64>, theta: f64 },

    #[error("singular shifted operator at t = {t} (condition estimate {cond:.3e})")]
    SingularOperator { t: f64, cond: f64 },

    #[error("matrix square root undefined: spectrum touches the closed negative real axis")]
    SquareRootUndefined,

    #[error("contour quadrature deviation {deviation:.3e} exceeds {tol:.1e}; increase radius cap or point count")]
    ContourUnderResolved { deviation: f64, tol: f64 },

    #[error("linear solve failed at time step t = {t}")]
    LinearSolveFailed { t: f64 },

    #[error("no contraction: P-norm estimate {q:.3} at mu cap {mu_cap}; refine grid or raise mu cap")]
    NoContraction { q: f64, mu_cap: f64 },

    #[error("fixed-point iteration did not converge in {max_iter} sweeps (last increment {increment:.3e})")]
    NonConvergent { max_iter: usize, increment: f64 },

    #[error("modulus fails the Dini condition (eta <= gamma/2); hypothesis (H3) gate refused")]
    DiniFailure,

    #[error("need at least {needed} rows/points, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("estimate violated: {what} (witness {witness}, ratio {ratio:.6})")]
    EstimateViolated { what: String, witness: String, ratio: f64 },

    #[error("{0}")]
    Invalid(String),
}
