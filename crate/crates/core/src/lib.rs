//! Solvers and estimate checkers for non-autonomous evolution equations
//! `u'(t) + A(t) u(t) = f(t)` on finite-dimensional Hilbert couples.
//!
//! The operator family arises from a time-dependent sesquilinear form given
//! in coordinates by a matrix path `t -> A(t)`. The crate provides
//!
//! * [`hilbert`] — Gram-matrix realizations of the couple `V ⊂ H`, the
//!   interpolation scale `V_γ` and its duals, and weighted operator norms;
//! * [`forms`] — matrix form paths, their structural constants `(M, α, β)`,
//!   moduli of continuity and the Dini quantities, hypothesis checks;
//! * [`affine`] — the piecewise-affine-in-time approximation built from
//!   interval averages over a uniform subdivision, with its modulus and
//!   deviation bounds;
//! * [`semigroup`] — frozen-time sectorial calculus: resolvents, matrix
//!   exponentials, contour quadrature and the ten resolvent/semigroup
//!   estimates;
//! * [`solver`] — a Crank–Nicolson oracle and a frozen-coefficient
//!   fixed-point solver based on the Acquistapace–Terreni representation;
//! * [`study`] — convergence studies over mesh ladders with envelope
//!   comparison and CSV output.
//!
//! Everything is generic over the real scalar type through [`Scalar`];
//! the crate-root aliases fix `f64` as the default precision.

pub mod affine;
pub mod error;
pub mod forms;
pub mod hilbert;
mod linalg;
pub mod scalar;
pub mod semigroup;
pub mod solver;
pub mod study;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Gauss–Legendre rules used throughout; exposed for callers that quadrature
/// their own functionals of trajectories.
pub mod quadrature {
    pub use crate::linalg::{gauss_legendre, gauss_on_interval};
}

pub use affine::{AffineFormPath, Subdivision};
pub use forms::{FormConstants, FormPath, HypothesisReport, ModulusModel, ModulusProfile};
pub use hilbert::SpacePair;
pub use semigroup::SectorSpec;
pub use solver::{SolutionNorms, SourceTerm, TimeGrid, Trajectory};
pub use study::{EnvelopeSpec, StudyRow};

/// Default real scalar used by the CLI and the test suites.
pub type Real = f64;
/// Complex scalar over [`Real`].
pub type Cplx = num_complex::Complex<Real>;
/// Dense complex matrix over [`Real`].
pub type CMatrix = nalgebra::DMatrix<Cplx>;
/// Dense complex column vector over [`Real`].
pub type CVector = nalgebra::DVector<Cplx>;
