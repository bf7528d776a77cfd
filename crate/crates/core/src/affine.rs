//! Piecewise-affine-in-time approximation of a form path.
//!
//! Over a uniform subdivision of `[0, T]` the approximation interpolates
//! interval averages: on `[λ_k, λ_{k+1}]` it blends the average of the form
//! over `[λ_k, λ_{k+1}]` with the average over `[λ_{k+1}, λ_{k+2}]`. The
//! final average would reach beyond the horizon, so it is taken from the
//! constant extension `A(T)` — consistent with the `[0, 2T]` extension of
//! the modulus of continuity.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forms::{FormPath, ModulusProfile};
use crate::linalg::{self, CMat};
use crate::scalar::{real, to_f64, Scalar};

/// Uniform subdivision of `[0, T]` into `m` intervals.
#[derive(Clone, Copy, Debug)]
pub struct Subdivision<T: Scalar> {
    horizon: T,
    intervals: usize,
}

impl<T: Scalar> Subdivision<T> {
    pub fn uniform(horizon: T, intervals: usize) -> Result<Self> {
        if intervals == 0 || horizon <= T::zero() {
            return Err(Error::Invalid(
                "subdivision needs a positive horizon and at least one interval".into(),
            ));
        }
        Ok(Self { horizon, intervals })
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Mesh width `|Λ| = T / m`.
    pub fn mesh(&self) -> T {
        self.horizon / real(self.intervals as f64)
    }

    /// Knot `λ_k = k T / m`.
    pub fn knot(&self, k: usize) -> T {
        self.horizon * real(k as f64 / self.intervals as f64)
    }
}

/// The affine interpolant of interval averages of a base path.
#[derive(Clone, Debug)]
pub struct AffineFormPath<T: Scalar> {
    base_descriptor: String,
    subdivision: Subdivision<T>,
    /// `m + 1` averages; index `m` is the phantom average `A(T)`.
    averages: Vec<CMat<T>>,
    quadrature_order: usize,
    space: std::sync::Arc<crate::hilbert::SpacePair<T>>,
}

/// Average the base path per interval with Gauss–Legendre quadrature and
/// attach the phantom average from the constant extension.
pub fn build_affine<T: Scalar>(
    fp: &FormPath<T>,
    intervals: usize,
    quad_order: usize,
) -> Result<AffineFormPath<T>> {
    if quad_order == 0 {
        return Err(Error::Invalid("quadrature order must be at least 1".into()));
    }
    let subdivision = Subdivision::uniform(fp.horizon(), intervals)?;
    let mesh = subdivision.mesh();
    let mut averages: Vec<CMat<T>> = (0..intervals)
        .into_par_iter()
        .map(|k| {
            let a = subdivision.knot(k);
            let rule = linalg::gauss_on_interval(quad_order, a, a + mesh);
            let mut acc = CMat::<T>::zeros(fp.space().dim(), fp.space().dim());
            for (t, w) in rule {
                acc += fp.eval(t).map(|x| x * Complex::new(w, T::zero()));
            }
            acc.map(|x| x / Complex::new(mesh, T::zero()))
        })
        .collect();
    // Phantom interval [T, T + |Λ|]: constant extension integrates to A(T).
    averages.push(fp.eval(fp.horizon()));
    Ok(AffineFormPath {
        base_descriptor: fp.descriptor().to_string(),
        subdivision,
        averages,
        quadrature_order: quad_order,
        space: fp.space().clone(),
    })
}

impl<T: Scalar> AffineFormPath<T> {
    pub fn subdivision(&self) -> &Subdivision<T> {
        &self.subdivision
    }

    pub fn averages(&self) -> &[CMat<T>] {
        &self.averages
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }

    /// Affine blend at `t`, clamped to `[0, T]`.
    pub fn eval(&self, t: T) -> CMat<T> {
        let m = self.subdivision.intervals();
        let mesh = self.subdivision.mesh();
        let t = t.max(T::zero()).min(self.subdivision.horizon());
        let mut k = to_f64((t / mesh).floor()) as usize;
        if k >= m {
            k = m - 1;
        }
        let left = self.subdivision.knot(k);
        let w = (t - left) / mesh;
        let wl = Complex::new(T::one() - w, T::zero());
        let wh = Complex::new(w, T::zero());
        self.averages[k].map(|x| x * wl) + self.averages[k + 1].map(|x| x * wh)
    }

    /// The affine path as a [`FormPath`]: exact, since the blend is linear
    /// between knot values `A_k`.
    pub fn as_form_path(&self) -> FormPath<T> {
        let m = self.subdivision.intervals();
        let times: Vec<T> = (0..=m).map(|k| self.subdivision.knot(k)).collect();
        FormPath::table(
            self.space.clone(),
            self.subdivision.horizon(),
            times,
            self.averages.clone(),
        )
        .expect("knots are strictly increasing")
        .with_descriptor(format!("affine(m={m}, base={})", self.base_descriptor))
    }
}

/// The modulus of the affine path: `(t/|Λ|) ω(4|Λ|)` on `[0, 2|Λ|]` and
/// `2 ω(2t)` beyond, using the `[0, 2T]` extension of `ω`.
pub fn omega_lambda<T: Scalar>(profile: &ModulusProfile<T>, mesh: T, t: T) -> Result<T> {
    if mesh <= T::zero() {
        return Err(Error::Invalid("mesh must be positive".into()));
    }
    if t < -real::<T>(1e-15) || t > profile.horizon * real(1.0 + 1e-12) {
        return Err(Error::TimeOutOfRange { t: to_f64(t), horizon: to_f64(profile.horizon) });
    }
    let t = t.max(T::zero());
    let two_mesh = mesh * real(2.0);
    if t <= two_mesh {
        Ok(t / mesh * profile.eval(mesh * real(4.0)))
    } else {
        Ok(real::<T>(2.0) * profile.eval(t * real(2.0)))
    }
}

/// Deviation bound `‖A_Λ(t) - A(t)‖ <= 2 ω(2|Λ|)`.
pub fn d_lambda<T: Scalar>(profile: &ModulusProfile<T>, mesh: T) -> T {
    real::<T>(2.0) * profile.eval(mesh * real(2.0))
}

/// Outcome of the affine bound verification.
#[derive(Clone, Debug)]
pub struct AffineBoundsReport<T: Scalar> {
    /// Max over sampled pairs of measured / `ω_Λ(|t-s|)`.
    pub max_modulus_ratio: T,
    /// Max over sampled times of measured / `d_Λ`.
    pub max_deviation_ratio: T,
    pub pass: bool,
    /// Worst pair when a bound is violated beyond the slack.
    pub witness: Option<(T, T)>,
}

const AFFINE_SLACK: f64 = 1e-6;

/// Check the two affine estimates on sampled `(t, s)` pairs: the `ω_Λ`
/// modulus bound for `A_Λ(t) - A_Λ(s)` and the `2ω(2|Λ|)` deviation bound
/// for `A_Λ(t) - A(t)`, both in `L(V, V'_γ)` with `γ` from the profile.
pub fn verify_affine_bounds<T: Scalar>(
    fp: &FormPath<T>,
    afp: &AffineFormPath<T>,
    profile: &ModulusProfile<T>,
    pair_samples: usize,
) -> Result<AffineBoundsReport<T>> {
    if pair_samples < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: pair_samples });
    }
    let sp = fp.space();
    let sigma = -profile.gamma;
    let horizon = fp.horizon();
    let mesh = afp.subdivision().mesh();
    let dev_bound = d_lambda(profile, mesh);
    let slack: T = real(1.0 + AFFINE_SLACK);

    let grid: Vec<T> = (0..pair_samples)
        .map(|k| horizon * real(k as f64 / (pair_samples - 1) as f64))
        .collect();
    let affine_mats: Vec<CMat<T>> = grid.iter().map(|&t| afp.eval(t)).collect();

    let mut max_modulus_ratio = T::zero();
    let mut max_deviation_ratio = T::zero();
    let mut witness = None;
    let mut pass = true;

    for (i, &t) in grid.iter().enumerate() {
        let dev = sp.form_operator_norm(&(affine_mats[i].clone() - fp.eval(t)), sigma)?;
        if dev_bound > T::zero() {
            let ratio = dev / dev_bound;
            max_deviation_ratio = max_deviation_ratio.max(ratio);
            if ratio > slack {
                pass = false;
                witness.get_or_insert((t, t));
            }
        } else if dev > real(1e-12) {
            pass = false;
            witness.get_or_insert((t, t));
        }
        for (j, &s) in grid.iter().enumerate().take(i) {
            let diff = sp.form_operator_norm(&(affine_mats[i].clone() - &affine_mats[j]), sigma)?;
            let bound = omega_lambda(profile, mesh, t - s)?;
            if bound > T::zero() {
                let ratio = diff / bound;
                max_modulus_ratio = max_modulus_ratio.max(ratio);
                if ratio > slack {
                    pass = false;
                    witness.get_or_insert((t, s));
                }
            } else if diff > real(1e-12) {
                pass = false;
                witness.get_or_insert((t, s));
            }
        }
    }

    Ok(AffineBoundsReport { max_modulus_ratio, max_deviation_ratio, pass, witness })
}

/// Two-sided constants of the square-root property: extreme values of
/// `‖B(t)^{1/2} u‖_H / ‖u‖_V` over the given times, where `B(t)` is the
/// H-realization of the β-shifted form.
///
/// The extremes come from the Hermitian pencil `(R^H G_H R, G_V)` with
/// `R = B^{1/2}`, so they are exact over all `u`, not sampled.
pub fn sqrt_property_constants<T: Scalar>(
    fp: &FormPath<T>,
    t_grid: &[T],
    beta: T,
) -> Result<(T, T)> {
    if t_grid.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let sp = fp.space();
    let mut lower = T::max_value().unwrap_or_else(T::one);
    let mut upper = T::zero();
    for &t in t_grid {
        let shifted = fp.eval(t) + sp.gram_h().map(|g| g * Complex::new(beta, T::zero()));
        let b = sp.h_realization(&shifted);
        // Sectoriality precheck: the H-Hermitian part must be definite,
        // otherwise the principal square root may not exist.
        let herm = (sp.gram_h() * &b + (sp.gram_h() * &b).adjoint()).scale(real(0.5));
        let ge = linalg::generalized_hermitian_eigen(&herm, sp.gram_h())?;
        if ge.eigenvalues[0] <= T::zero() {
            return Err(Error::SquareRootUndefined);
        }
        let root = linalg::sqrtm(&b)?;
        let weighted = root.adjoint() * sp.gram_h() * &root;
        let pencil = linalg::generalized_hermitian_eigen(&weighted, sp.gram_v())?;
        lower = lower.min(pencil.eigenvalues[0].max(T::zero()).sqrt());
        upper = upper.max(pencil.eigenvalues[pencil.eigenvalues.len() - 1].sqrt());
    }
    Ok((lower, upper))
}
