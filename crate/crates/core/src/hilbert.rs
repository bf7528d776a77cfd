//! Gram-matrix realization of the Hilbert couple `V ⊂ H`.
//!
//! The couple is encoded by two Hermitian positive-definite Gram matrices.
//! The scale operator `S` defined by `(u, v)_V = (S u, v)_H` is diagonalized
//! once at construction; its H-orthonormal eigenbasis realizes the whole
//! interpolation scale `V_σ` for `σ ∈ [-1, 1]` spectrally: `σ = 0` is `H`,
//! `σ = 1` is `V`, negative exponents give the dual scale under the H pivot,
//! so `σ = -1` is `V'` and `σ = -γ` is `V'_γ`.

use nalgebra::DVector;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::scalar::{real, to_f64, Scalar};

/// Relative tolerance for Hermitian symmetry of input Gram matrices.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Coordinate realization of the couple `V ⊂ H` with its interpolation scale.
#[derive(Clone, Debug)]
pub struct SpacePair<T: Scalar> {
    dim: usize,
    gram_h: CMat<T>,
    gram_v: CMat<T>,
    scale_eigs: DVector<T>,
    scale_basis: CMat<T>,
    /// `X^H G_H`: maps a coordinate vector to its scale-basis coefficients.
    coeff_map: CMat<T>,
    c_h: T,
}

impl<T: Scalar> SpacePair<T> {
    /// Build the couple from the two Gram matrices.
    ///
    /// Solves the generalized Hermitian eigenproblem `G_V x = s G_H x`.
    /// Rejects non-Hermitian input (relative defect above [`HERMITIAN_TOL`])
    /// and non-definite input (an eigenvalue at or below zero).
    pub fn new(gram_h: CMat<T>, gram_v: CMat<T>) -> Result<Self> {
        let n = gram_h.nrows();
        linalg::check_square(&gram_h, n)?;
        linalg::check_square(&gram_v, n)?;
        if n == 0 {
            return Err(Error::Invalid("empty space".into()));
        }
        for g in [&gram_h, &gram_v] {
            let defect = linalg::hermitian_defect(g);
            if defect > real(HERMITIAN_TOL) {
                return Err(Error::NotHermitian { defect: to_f64(defect), tol: HERMITIAN_TOL });
            }
        }
        let ge = linalg::generalized_hermitian_eigen(&gram_v, &gram_h)?;
        if ge.eigenvalues[0] <= T::zero() {
            return Err(Error::NotPositiveDefinite { eigenvalue: to_f64(ge.eigenvalues[0]) });
        }
        let coeff_map = ge.eigenvectors.adjoint() * &gram_h;
        let c_h = (T::one() / ge.eigenvalues[0]).sqrt();
        Ok(Self {
            dim: n,
            gram_h,
            gram_v,
            scale_eigs: ge.eigenvalues,
            scale_basis: ge.eigenvectors,
            coeff_map,
            c_h,
        })
    }

    /// Identity couple of dimension `n` (`G_H = G_V = I`).
    pub fn identity(n: usize) -> Self {
        Self::new(CMat::<T>::identity(n, n), CMat::<T>::identity(n, n))
            .expect("identity couple is always valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gram_h(&self) -> &CMat<T> {
        &self.gram_h
    }

    pub fn gram_v(&self) -> &CMat<T> {
        &self.gram_v
    }

    /// Eigenvalues of the scale operator, ascending.
    pub fn scale_eigs(&self) -> &DVector<T> {
        &self.scale_eigs
    }

    /// H-orthonormal eigenbasis of the scale operator, one vector per column.
    pub fn scale_basis(&self) -> &CMat<T> {
        &self.scale_basis
    }

    /// Embedding constant: `‖u‖_H ≤ c_H ‖u‖_V`, with `c_H² = max_j 1/s_j`.
    pub fn c_h(&self) -> T {
        self.c_h
    }

    /// Coefficients of `u` in the H-orthonormal scale basis.
    pub fn coeffs(&self, u: &CVec<T>) -> CVec<T> {
        &self.coeff_map * u
    }

    /// `(u, v)_H` in coordinates.
    pub fn h_inner(&self, u: &CVec<T>, v: &CVec<T>) -> Complex<T> {
        (v.adjoint() * &self.gram_h * u)[(0, 0)]
    }

    /// Norm on the interpolation scale `V_σ`, `σ ∈ [-1, 1]`.
    ///
    /// `σ = 0` reproduces `‖·‖_H`, `σ = 1` reproduces `‖·‖_V`; negative `σ`
    /// gives the dual norms under the H pivot (`σ = -1` is `V'`).
    pub fn scale_norm(&self, u: &CVec<T>, sigma: T) -> Result<T> {
        if sigma.abs() > T::one() + real(1e-14) {
            return Err(Error::ScaleOutOfRange { sigma: to_f64(sigma) });
        }
        if u.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: u.len() });
        }
        let coeffs = self.coeffs(u);
        let mut acc = T::zero();
        for j in 0..self.dim {
            acc += self.scale_eigs[j].powf(sigma) * coeffs[j].norm_sqr();
        }
        Ok(acc.sqrt())
    }

    /// `‖u‖_H`.
    pub fn h_norm(&self, u: &CVec<T>) -> T {
        self.scale_norm(u, T::zero()).expect("sigma = 0 is always valid")
    }

    /// `‖u‖_V`.
    pub fn v_norm(&self, u: &CVec<T>) -> T {
        self.scale_norm(u, T::one()).expect("sigma = 1 is always valid")
    }

    /// Operator norm of a form matrix `A` as a map `V -> V'_{|σ|}`,
    /// for `σ ∈ [-1, 0]`.
    ///
    /// This is `sup |v^H A u| / (‖u‖_V ‖v‖_{V_{|σ|}})`, computed as the
    /// largest singular value of the scale-weighted matrix
    /// `diag(s^{σ/2}) X^H A X diag(s^{-1/2})`. `σ = -1` gives the `L(V, V')`
    /// norm, `σ = -γ` the `L(V, V'_γ)` norm.
    pub fn form_operator_norm(&self, a: &CMat<T>, sigma: T) -> Result<T> {
        if sigma > real(1e-14) || sigma < -T::one() - real(1e-14) {
            return Err(Error::ScaleOutOfRange { sigma: to_f64(sigma) });
        }
        linalg::check_square(a, self.dim)?;
        let core = self.scale_basis.adjoint() * a * &self.scale_basis;
        Ok(linalg::spectral_norm(&self.weight(core, sigma * real(0.5), -real::<T>(0.5))))
    }

    /// Operator norm of an H-realized operator matrix `M` as a map
    /// `V_{in} -> V_{out}` between any two scales in `[-1, 1]`.
    pub fn op_norm_between(&self, m: &CMat<T>, in_scale: T, out_scale: T) -> Result<T> {
        for s in [in_scale, out_scale] {
            if s.abs() > T::one() + real(1e-14) {
                return Err(Error::ScaleOutOfRange { sigma: to_f64(s) });
            }
        }
        linalg::check_square(m, self.dim)?;
        let core = &self.coeff_map * m * &self.scale_basis;
        Ok(linalg::spectral_norm(&self.weight(
            core,
            out_scale * real(0.5),
            -in_scale * real(0.5),
        )))
    }

    /// H-realization `G_H^{-1} A` of a form matrix.
    pub fn h_realization(&self, a: &CMat<T>) -> CMat<T> {
        if self.gram_h == CMat::<T>::identity(self.dim, self.dim) {
            return a.clone();
        }
        linalg::cholesky_pd(&self.gram_h)
            .expect("gram_h validated at construction")
            .solve(a)
    }

    fn weight(&self, mut core: CMat<T>, left_exp: T, right_exp: T) -> CMat<T> {
        for j in 0..self.dim {
            let wl = Complex::new(self.scale_eigs[j].powf(left_exp), T::zero());
            let wr = Complex::new(self.scale_eigs[j].powf(right_exp), T::zero());
            for i in 0..self.dim {
                core[(j, i)] *= wl;
                core[(i, j)] *= wr;
            }
        }
        core
    }
}
