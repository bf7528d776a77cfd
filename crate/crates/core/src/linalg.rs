//! Dense linear-algebra helpers shared by the public modules.

use nalgebra::{Cholesky, ComplexField, DMatrix, DVector, Dyn};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{real, to_f64, Scalar};

pub type CMat<T> = DMatrix<Complex<T>>;
pub type CVec<T> = DVector<Complex<T>>;

/// Relative Frobenius defect of Hermitian symmetry.
pub fn hermitian_defect<T: Scalar>(a: &CMat<T>) -> T {
    let diff = a - a.adjoint();
    let scale = a.norm().max(real(1e-300));
    diff.norm() / scale
}

pub fn check_square<T: Scalar>(a: &CMat<T>, n: usize) -> Result<()> {
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.nrows().max(a.ncols()) });
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
///
/// Columns of the returned matrix are orthonormal eigenvectors.
pub fn hermitian_eigen<T: Scalar>(a: &CMat<T>) -> (DVector<T>, CMat<T>) {
    let n = a.nrows();
    // Symmetrize first so roundoff in callers cannot leak into the solver.
    let sym = (a + a.adjoint()).scale(real(0.5));
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut vals = DVector::<T>::zeros(n);
    let mut vecs = CMat::<T>::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vals[k] = eig.eigenvalues[i];
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub struct GeneralizedEigen<T: Scalar> {
    /// Eigenvalues of the pencil (A, B), ascending.
    pub eigenvalues: DVector<T>,
    /// B-orthonormal eigenvectors, one per column.
    pub eigenvectors: CMat<T>,
}

/// Hermitian-definite generalized eigenproblem `A x = s B x` via Cholesky
/// reduction of `B`. Both inputs must be Hermitian and `B` positive definite.
pub fn generalized_hermitian_eigen<T: Scalar>(
    a: &CMat<T>,
    b: &CMat<T>,
) -> Result<GeneralizedEigen<T>> {
    let n = a.nrows();
    check_square(b, n)?;
    let chol = cholesky_pd(b)?;
    let l = chol.l();
    // C = L^{-1} A L^{-H}, Hermitian; eigenvectors pulled back by L^{-H}.
    let z = l
        .solve_lower_triangular(a)
        .ok_or(Error::NotPositiveDefinite { eigenvalue: 0.0 })?;
    let c = l
        .solve_lower_triangular(&z.adjoint())
        .ok_or(Error::NotPositiveDefinite { eigenvalue: 0.0 })?;
    let (vals, y) = hermitian_eigen(&c);
    let x = l
        .adjoint()
        .solve_upper_triangular(&y)
        .ok_or(Error::NotPositiveDefinite { eigenvalue: 0.0 })?;
    Ok(GeneralizedEigen { eigenvalues: vals, eigenvectors: x })
}

/// Cholesky factorization that reports indefiniteness as a typed error.
pub fn cholesky_pd<T: Scalar>(a: &CMat<T>) -> Result<Cholesky<Complex<T>, Dyn>> {
    Cholesky::new(a.clone()).ok_or_else(|| {
        let (vals, _) = hermitian_eigen(a);
        Error::NotPositiveDefinite { eigenvalue: to_f64(vals[0]) }
    })
}

/// Largest singular value.
pub fn spectral_norm<T: Scalar>(a: &CMat<T>) -> T {
    if a.is_empty() {
        return T::zero();
    }
    a.clone().singular_values()[0]
}

/// Solve `A x = b` by LU with a crude reciprocal-condition estimate; fails
/// when the factorization is numerically singular.
pub fn lu_solve<T: Scalar>(a: &CMat<T>, b: &CVec<T>, t_label: f64) -> Result<CVec<T>> {
    let lu = a.clone().lu();
    let mut min_piv = T::max_value().unwrap_or_else(T::one);
    let mut max_piv = T::zero();
    for i in 0..a.nrows() {
        let p = lu.u()[(i, i)].modulus();
        min_piv = min_piv.min(p);
        max_piv = max_piv.max(p);
    }
    if min_piv <= max_piv * real(1e-15) {
        return Err(Error::SingularOperator {
            t: t_label,
            cond: to_f64(if min_piv > T::zero() { max_piv / min_piv } else { T::max_value().unwrap_or_else(T::one) }),
        });
    }
    lu.solve(b).ok_or(Error::LinearSolveFailed { t: t_label })
}

/// Matrix inverse through LU; same singularity reporting as [`lu_solve`].
pub fn lu_inverse<T: Scalar>(a: &CMat<T>, t_label: f64) -> Result<CMat<T>> {
    let n = a.nrows();
    let lu = a.clone().lu();
    let mut min_piv = T::max_value().unwrap_or_else(T::one);
    let mut max_piv = T::zero();
    for i in 0..n {
        let p = lu.u()[(i, i)].modulus();
        min_piv = min_piv.min(p);
        max_piv = max_piv.max(p);
    }
    if min_piv <= max_piv * real(1e-15) {
        return Err(Error::SingularOperator {
            t: t_label,
            cond: to_f64(if min_piv > T::zero() { max_piv / min_piv } else { T::max_value().unwrap_or_else(T::one) }),
        });
    }
    lu.try_inverse().ok_or(Error::LinearSolveFailed { t: t_label })
}

/// Principal matrix square root by the Denman–Beavers iteration.
///
/// Requires the spectrum to avoid the closed negative real axis; divergence
/// or stagnation is reported as [`Error::SquareRootUndefined`].
pub fn sqrtm<T: Scalar>(a: &CMat<T>) -> Result<CMat<T>> {
    let n = a.nrows();
    let eye = CMat::<T>::identity(n, n);
    let mut y = a.clone();
    let mut z = eye.clone();
    let tol: T = real(1e-14);
    let half = Complex::new(real::<T>(0.5), T::zero());
    for _ in 0..80 {
        let y_inv = lu_inverse(&y, f64::NAN).map_err(|_| Error::SquareRootUndefined)?;
        let z_inv = lu_inverse(&z, f64::NAN).map_err(|_| Error::SquareRootUndefined)?;
        let y_next = (&y + z_inv) * half;
        let z_next = (&z + y_inv) * half;
        let step = (&y_next - &y).norm();
        let scale = y_next.norm().max(real(1e-300));
        y = y_next;
        z = z_next;
        if !to_f64(step).is_finite() {
            return Err(Error::SquareRootUndefined);
        }
        if step <= tol * scale {
            let res = (&y * &y - a).norm() / a.norm().max(real(1e-300));
            if res > real(1e-8) {
                return Err(Error::SquareRootUndefined);
            }
            return Ok(y);
        }
    }
    Err(Error::SquareRootUndefined)
}

/// Largest singular value of an implicitly given operator, by power
/// iteration on `A^H A`. Returns `(sigma, converged)`.
pub fn power_iteration_norm<T, F, G>(
    dim: usize,
    apply: F,
    apply_adjoint: G,
    iterations: usize,
    tol: T,
) -> (T, bool)
where
    T: Scalar,
    F: Fn(&CVec<T>) -> CVec<T>,
    G: Fn(&CVec<T>) -> CVec<T>,
{
    if dim == 0 {
        return (T::zero(), true);
    }
    // Deterministic quasi-random start vector.
    let mut v = CVec::<T>::from_fn(dim, |i, _| {
        let x = ((i as f64) * 0.754_877_666 + 0.1).fract() - 0.5;
        let y = ((i as f64) * 0.569_840_29 + 0.3).fract() - 0.5;
        Complex::new(real(x), real(y))
    });
    let nv = v.norm();
    if nv <= T::zero() {
        return (T::zero(), true);
    }
    v /= Complex::new(nv, T::zero());
    let mut sigma = T::zero();
    for _ in 0..iterations {
        let w = apply(&v);
        let sigma_new = w.norm();
        if sigma_new <= real(1e-300) {
            return (T::zero(), true);
        }
        let mut v_new = apply_adjoint(&w);
        let nvn = v_new.norm();
        if nvn <= real(1e-300) {
            return (T::zero(), true);
        }
        v_new /= Complex::new(nvn, T::zero());
        let drift = (sigma_new - sigma).abs() / sigma_new.max(real(1e-300));
        sigma = sigma_new;
        v = v_new;
        if drift < tol {
            return (sigma, true);
        }
    }
    (sigma, false)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre<T: Scalar>(order: usize) -> (Vec<T>, Vec<T>) {
    assert!(order >= 1, "quadrature order must be at least 1");
    let n = order;
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf: T = real(n as f64);
    for i in 0..n {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (real::<T>(std::f64::consts::PI) * (real::<T>(i as f64) + real(0.75))
            / (nf + real(0.5)))
        .cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < real(1e-16) {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        nodes[i] = x;
        weights[i] = real::<T>(2.0) / ((T::one() - x * x) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn legendre_and_derivative<T: Scalar>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    if n == 0 {
        return (p0, T::zero());
    }
    for k in 2..=n {
        let kf: T = real(k as f64);
        let p2 = ((real::<T>(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = real::<T>(n as f64) * (x * p1 - p0) / (x * x - T::one());
    (p1, dp)
}

/// Gauss–Legendre rule mapped onto `[a, b]`.
pub fn gauss_on_interval<T: Scalar>(order: usize, a: T, b: T) -> Vec<(T, T)> {
    let (nodes, weights) = gauss_legendre::<T>(order);
    let mid = (a + b) * real(0.5);
    let half = (b - a) * real(0.5);
    nodes
        .iter()
        .zip(weights.iter())
        .map(|(&x, &w)| (mid + half * x, w * half))
        .collect()
}

/// Ordinary least squares for `y = intercept + slope * x`.
pub fn linear_fit<T: Scalar>(xs: &[T], ys: &[T]) -> Option<(T, T)> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf: T = real(n as f64);
    let sx: T = xs.iter().copied().fold(T::zero(), |a, b| a + b);
    let sy: T = ys.iter().copied().fold(T::zero(), |a, b| a + b);
    let sxx: T = xs.iter().map(|&x| x * x).fold(T::zero(), |a, b| a + b);
    let sxy: T = xs.iter().zip(ys).map(|(&x, &y)| x * y).fold(T::zero(), |a, b| a + b);
    let denom = nf * sxx - sx * sx;
    if denom.abs() <= real(1e-300) {
        return None;
    }
    let slope = (nf * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / nf;
    Some((intercept, slope))
}
