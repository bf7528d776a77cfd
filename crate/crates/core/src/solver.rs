//! Solvers for the Cauchy problem `u'(t) + A(t) u(t) = f(t)`, `u(0) = u0`.
//!
//! Two independent routes:
//!
//! * [`oracle_solve`] — Crank–Nicolson with substeps per grid cell and one
//!   Richardson extrapolation pass; the accuracy workhorse every derived
//!   value is checked against.
//! * [`at::at_solve`] — the frozen-coefficient representation
//!   `u = u1 + u2 + P u` solved by Neumann iteration after a μ-shift, built
//!   from exact matrix exponentials of the frozen operators.
//!
//! Derivatives are always recovered from the equation, never from finite
//! differences, so the H¹ norms stay honest on coarse grids.

pub mod at;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forms::{FormPath, TimeCoeff};
use crate::hilbert::SpacePair;
use crate::linalg::{self, CMat, CVec};
use crate::scalar::{real, to_f64, Scalar};
use crate::semigroup::expm;

/// Discretization of `[0, T]` with a per-cell Gauss rule.
#[derive(Clone, Debug)]
pub struct TimeGrid<T: Scalar> {
    horizon: T,
    nodes: Vec<T>,
    gauss_order: usize,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn uniform(horizon: T, cells: usize, gauss_order: usize) -> Result<Self> {
        if cells == 0 || gauss_order == 0 || horizon <= T::zero() {
            return Err(Error::Invalid(
                "grid needs a positive horizon, cells >= 1 and gauss order >= 1".into(),
            ));
        }
        let nodes =
            (0..=cells).map(|k| horizon * real(k as f64 / cells as f64)).collect();
        Ok(Self { horizon, nodes, gauss_order })
    }

    pub fn from_nodes(nodes: Vec<T>, gauss_order: usize) -> Result<Self> {
        if nodes.len() < 2 || gauss_order == 0 {
            return Err(Error::Invalid("grid needs at least two nodes".into()));
        }
        if nodes[0] != T::zero() {
            return Err(Error::Invalid("grid must start at t = 0".into()));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("grid nodes must be strictly increasing".into()));
        }
        let horizon = nodes[nodes.len() - 1];
        Ok(Self { horizon, nodes, gauss_order })
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn gauss_order(&self) -> usize {
        self.gauss_order
    }

    /// Gauss points and weights of cell `j`.
    pub fn cell_rule(&self, j: usize) -> Vec<(T, T)> {
        linalg::gauss_on_interval(self.gauss_order, self.nodes[j], self.nodes[j + 1])
    }

    /// The common cell width, when the grid is uniform.
    pub fn uniform_cell_width(&self) -> Option<T> {
        let h = self.nodes[1] - self.nodes[0];
        let tol = h * real(1e-12);
        for w in self.nodes.windows(2) {
            if ((w[1] - w[0]) - h).abs() > tol {
                return None;
            }
        }
        Some(h)
    }
}

/// Visit `exp(-(tau - s_idx) B)` for every shared Gauss point of the full
/// cells `0..cell` (cell-major indices). On uniform grids consecutive cells
/// differ by an exact factor `exp(-h B)`, so each target needs `order + 1`
/// Padé evaluations and one matrix product per remaining point; non-uniform
/// grids fall back to one Padé evaluation per point.
pub(crate) fn shared_exponentials<T: Scalar>(
    b: &CMat<T>,
    tau: T,
    cell: usize,
    order: usize,
    shared_times: &[T],
    uniform_h: Option<T>,
    mut visit: impl FnMut(usize, T, &CMat<T>),
) {
    if cell == 0 {
        return;
    }
    match uniform_h {
        Some(h) => {
            let e_cell = expm(&b.map(|x| x * Complex::new(-h, T::zero())));
            let mut chain: Vec<CMat<T>> = (0..order)
                .map(|q| {
                    let idx = (cell - 1) * order + q;
                    let gap = tau - shared_times[idx];
                    expm(&b.map(|x| x * Complex::new(-gap, T::zero())))
                })
                .collect();
            for j in (0..cell).rev() {
                for (q, link) in chain.iter().enumerate() {
                    let idx = j * order + q;
                    visit(idx, tau - shared_times[idx], link);
                }
                if j > 0 {
                    for link in chain.iter_mut() {
                        *link = &*link * &e_cell;
                    }
                }
            }
        }
        None => {
            for (idx, &s) in shared_times.iter().enumerate().take(cell * order) {
                let gap = tau - s;
                let e = expm(&b.map(|x| x * Complex::new(-gap, T::zero())));
                visit(idx, gap, &e);
            }
        }
    }
}

/// Where a trajectory came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Oracle,
    AtSolver,
    Derived,
}

/// A time-gridded solution with values and equation-consistent derivatives.
#[derive(Clone, Debug)]
pub struct Trajectory<T: Scalar> {
    pub grid: TimeGrid<T>,
    pub values: Vec<CVec<T>>,
    pub derivatives: Vec<CVec<T>>,
    pub provenance: Provenance,
}

impl<T: Scalar> Trajectory<T> {
    /// Difference of two trajectories on the same grid.
    pub fn difference(a: &Self, b: &Self) -> Result<Self> {
        if a.grid.nodes() != b.grid.nodes() {
            return Err(Error::Invalid("trajectories live on different grids".into()));
        }
        Ok(Self {
            grid: a.grid.clone(),
            values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
            derivatives: a.derivatives.iter().zip(&b.derivatives).map(|(x, y)| x - y).collect(),
            provenance: Provenance::Derived,
        })
    }

    pub fn scaled(&self, factor: Complex<T>) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.map(|x| x * factor)).collect(),
            derivatives: self.derivatives.iter().map(|v| v.map(|x| x * factor)).collect(),
            provenance: Provenance::Derived,
        }
    }

    /// Cubic Hermite value on cell `j` at `t`.
    fn hermite(&self, j: usize, t: T) -> (CVec<T>, CVec<T>) {
        let a = self.grid.nodes()[j];
        let b = self.grid.nodes()[j + 1];
        let h = b - a;
        let x = (t - a) / h;
        let x2 = x * x;
        let x3 = x2 * x;
        let h00 = real::<T>(2.0) * x3 - real::<T>(3.0) * x2 + T::one();
        let h10 = x3 - real::<T>(2.0) * x2 + x;
        let h01 = -real::<T>(2.0) * x3 + real::<T>(3.0) * x2;
        let h11 = x3 - x2;
        // Derivatives of the basis functions with respect to t.
        let d00 = (real::<T>(6.0) * x2 - real::<T>(6.0) * x) / h;
        let d10 = (real::<T>(3.0) * x2 - real::<T>(4.0) * x + T::one()) / h;
        let d01 = (-real::<T>(6.0) * x2 + real::<T>(6.0) * x) / h;
        let d11 = (real::<T>(3.0) * x2 - real::<T>(2.0) * x) / h;
        let cc = |w: T| Complex::new(w, T::zero());
        let value = self.values[j].map(|v| v * cc(h00))
            + self.derivatives[j].map(|v| v * cc(h10 * h))
            + self.values[j + 1].map(|v| v * cc(h01))
            + self.derivatives[j + 1].map(|v| v * cc(h11 * h));
        let deriv = self.values[j].map(|v| v * cc(d00))
            + self.derivatives[j].map(|v| v * cc(d10 * h))
            + self.values[j + 1].map(|v| v * cc(d01))
            + self.derivatives[j + 1].map(|v| v * cc(d11 * h));
        (value, deriv)
    }
}

/// Right-hand side `f(t)` in H coordinates.
#[derive(Clone, Debug)]
pub enum SourceTerm<T: Scalar> {
    Zero,
    Constant(CVec<T>),
    /// `f(t) = coeff(t) * profile`.
    Modulated { profile: CVec<T>, coeff: TimeCoeff<T> },
    /// Linear interpolation between tabulated values.
    Table { times: Vec<T>, values: Vec<CVec<T>> },
}

impl<T: Scalar> SourceTerm<T> {
    pub fn eval(&self, t: T, dim: usize) -> CVec<T> {
        match self {
            SourceTerm::Zero => CVec::<T>::zeros(dim),
            SourceTerm::Constant(p) => p.clone(),
            SourceTerm::Modulated { profile, coeff } => {
                let c = coeff.eval(t);
                profile.map(|x| x * c)
            }
            SourceTerm::Table { times, values } => {
                let m = times.len();
                if t <= times[0] {
                    return values[0].clone();
                }
                if t >= times[m - 1] {
                    return values[m - 1].clone();
                }
                let mut hi = 1;
                while times[hi] < t {
                    hi += 1;
                }
                let w = (t - times[hi - 1]) / (times[hi] - times[hi - 1]);
                values[hi - 1].map(|x| x * Complex::new(T::one() - w, T::zero()))
                    + values[hi].map(|x| x * Complex::new(w, T::zero()))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, SourceTerm::Zero)
    }

    /// Polynomial-in-time representation `f(t) = sum_j t^j c_j`, when the
    /// source admits one. Powers and tables do not.
    pub fn poly_vectors(&self, dim: usize) -> Option<Vec<CVec<T>>> {
        match self {
            SourceTerm::Zero => Some(vec![CVec::<T>::zeros(dim)]),
            SourceTerm::Constant(p) => Some(vec![p.clone()]),
            SourceTerm::Modulated { profile, coeff } => match coeff {
                TimeCoeff::Const(c) => Some(vec![profile.map(|x| x * *c)]),
                TimeCoeff::Poly(cs) => {
                    Some(cs.iter().map(|c| profile.map(|x| x * *c)).collect())
                }
                TimeCoeff::Power { .. } => None,
            },
            SourceTerm::Table { .. } => None,
        }
    }
}

/// Crank–Nicolson on `G_H u' + A(t) u = G_H f` with `substeps` sub-intervals
/// per grid cell, then one Richardson pass against the halved-substep run.
///
/// Serves as the independent oracle: with the extrapolation the node error
/// is fourth order in the substep width.
pub fn oracle_solve<T: Scalar>(
    fp: &FormPath<T>,
    f: &SourceTerm<T>,
    u0: &CVec<T>,
    grid: &TimeGrid<T>,
    substeps: usize,
) -> Result<Trajectory<T>> {
    if substeps == 0 {
        return Err(Error::Invalid("substeps must be at least 1".into()));
    }
    let coarse = cn_pass(fp, f, u0, grid, substeps)?;
    let fine = cn_pass(fp, f, u0, grid, substeps * 2)?;
    let third = Complex::new(real::<T>(1.0 / 3.0), T::zero());
    let four = Complex::new(real::<T>(4.0), T::zero());
    let values: Vec<CVec<T>> = coarse
        .iter()
        .zip(fine.iter())
        .map(|(c, fv)| (fv.map(|x| x * four) - c).map(|x| x * third))
        .collect();
    let derivatives = derivatives_from_equation(fp, f, grid, &values);
    Ok(Trajectory { grid: grid.clone(), values, derivatives, provenance: Provenance::Oracle })
}

fn cn_pass<T: Scalar>(
    fp: &FormPath<T>,
    f: &SourceTerm<T>,
    u0: &CVec<T>,
    grid: &TimeGrid<T>,
    substeps: usize,
) -> Result<Vec<CVec<T>>> {
    let sp = fp.space();
    let n = sp.dim();
    let gh = sp.gram_h();
    let mut out = Vec::with_capacity(grid.nodes().len());
    let mut u = u0.clone();
    out.push(u.clone());
    for j in 0..grid.cells() {
        let a = grid.nodes()[j];
        let b = grid.nodes()[j + 1];
        let h = (b - a) / real(substeps as f64);
        let half_h = Complex::new(h * real::<T>(0.5), T::zero());
        for k in 0..substeps {
            let t0 = a + h * real(k as f64);
            let t1 = t0 + h;
            let a0 = fp.eval(t0);
            let a1 = fp.eval(t1);
            let lhs = gh + a1.map(|x| x * half_h);
            let rhs_mat = gh - a0.map(|x| x * half_h);
            let forcing =
                gh * (f.eval(t0, n) + f.eval(t1, n)).map(|x| x * half_h);
            let rhs = rhs_mat * &u + forcing;
            u = linalg::lu_solve(&lhs, &rhs, to_f64(t1))?;
        }
        out.push(u.clone());
    }
    Ok(out)
}

fn derivatives_from_equation<T: Scalar>(
    fp: &FormPath<T>,
    f: &SourceTerm<T>,
    grid: &TimeGrid<T>,
    values: &[CVec<T>],
) -> Vec<CVec<T>> {
    let sp = fp.space();
    let n = sp.dim();
    grid.nodes()
        .iter()
        .zip(values.iter())
        .map(|(&t, u)| {
            let b = sp.h_realization(&fp.eval(t));
            f.eval(t, n) - b * u
        })
        .collect()
}

/// Geometric refinement of `[a, tau]` toward `tau`: subcell widths halve
/// until they drop below `min_width`, then the remaining sliver is kept
/// whole. Returns subcell boundaries `a = b_0 < ... < b_k = tau`.
fn graded_partition<T: Scalar>(a: T, tau: T, min_width: T) -> Vec<T> {
    let mut bounds = vec![a];
    let mut left = a;
    loop {
        let remaining = tau - left;
        if remaining <= min_width * real(2.0) {
            break;
        }
        left = tau - remaining * real(0.5);
        bounds.push(left);
    }
    bounds.push(tau);
    bounds
}

/// Quadrature points for `∫_0^tau` on the grid: full cells below the cell
/// containing `tau`, then a graded partition of the remainder.
fn volterra_rule<T: Scalar>(grid: &TimeGrid<T>, tau: T, min_width: T) -> Vec<(T, T)> {
    let nodes = grid.nodes();
    let mut rule = Vec::new();
    let mut cell = 0;
    while cell + 1 < nodes.len() && nodes[cell + 1] < tau - min_width * real(0.5) {
        rule.extend(grid.cell_rule(cell));
        cell += 1;
    }
    let start = nodes[cell.min(nodes.len() - 2)];
    if tau > start {
        let bounds = graded_partition(start, tau, min_width);
        for w in bounds.windows(2) {
            rule.extend(linalg::gauss_on_interval(grid.gauss_order(), w[0], w[1]));
        }
    }
    rule
}

const GRADE_MIN_FACTOR: f64 = 1e-4;

/// `u_1(t_i) = e^{-t_i B(t_i)} u0` at every node, the frozen-coefficient
/// propagation of the initial datum.
pub fn at_u1<T: Scalar>(fp: &FormPath<T>, grid: &TimeGrid<T>, u0: &CVec<T>) -> Vec<CVec<T>> {
    let sp = fp.space();
    grid.nodes()
        .par_iter()
        .map(|&t| {
            let b = sp.h_realization(&fp.eval(t));
            expm(&b.map(|x| x * Complex::new(-t, T::zero()))) * u0
        })
        .collect()
}

/// `u_2(t_i) = ∫_0^{t_i} e^{-(t_i-s) B(t_i)} f(s) ds` by cell-wise Gauss
/// quadrature with graded refinement toward `s = t_i`.
pub fn at_u2<T: Scalar>(fp: &FormPath<T>, grid: &TimeGrid<T>, f: &SourceTerm<T>) -> Vec<CVec<T>> {
    let sp = fp.space();
    let n = sp.dim();
    let min_width = grid.horizon() * real(GRADE_MIN_FACTOR);
    grid.nodes()
        .par_iter()
        .map(|&t| {
            if t == T::zero() {
                return CVec::<T>::zeros(n);
            }
            let b = sp.h_realization(&fp.eval(t));
            let mut acc = CVec::<T>::zeros(n);
            for (s, w) in volterra_rule(grid, t, min_width) {
                let kernel = expm(&b.map(|x| x * Complex::new(-(t - s), T::zero())));
                acc += (kernel * f.eval(s, n)).map(|x| x * Complex::new(w, T::zero()));
            }
            acc
        })
        .collect()
}

/// Piecewise-quadratic interpolation of node values (three-point Lagrange
/// on the cell's neighborhood); used by the standalone `apply_P`/`apply_Q`
/// diagnostics, which only receive node samples.
fn interp_nodes<T: Scalar>(grid: &TimeGrid<T>, values: &[CVec<T>], s: T) -> CVec<T> {
    let nodes = grid.nodes();
    let k = nodes.len();
    let mut cell = 0;
    while cell + 2 < k && nodes[cell + 1] < s {
        cell += 1;
    }
    // Stencil t_{c-1}, t_c, t_{c+1} biased inward at the ends.
    let base = cell.saturating_sub(1).min(k - 3);
    let (t0, t1, t2) = (nodes[base], nodes[base + 1], nodes[base + 2]);
    let l0 = (s - t1) * (s - t2) / ((t0 - t1) * (t0 - t2));
    let l1 = (s - t0) * (s - t2) / ((t1 - t0) * (t1 - t2));
    let l2 = (s - t0) * (s - t1) / ((t2 - t0) * (t2 - t1));
    values[base].map(|x| x * Complex::new(l0, T::zero()))
        + values[base + 1].map(|x| x * Complex::new(l1, T::zero()))
        + values[base + 2].map(|x| x * Complex::new(l2, T::zero()))
}

/// `(P h)(t_i) = ∫_0^{t_i} e^{-(t_i-s) B(t_i)} (B(t_i) - B(s)) h(s) ds`
/// with `h` given at the nodes and interpolated quadratically in between.
pub fn apply_p<T: Scalar>(
    fp: &FormPath<T>,
    grid: &TimeGrid<T>,
    h: &[CVec<T>],
) -> Result<Vec<CVec<T>>> {
    if h.len() != grid.nodes().len() {
        return Err(Error::DimensionMismatch { expected: grid.nodes().len(), got: h.len() });
    }
    let sp = fp.space();
    let n = sp.dim();
    let min_width = grid.horizon() * real(GRADE_MIN_FACTOR);
    let out = grid
        .nodes()
        .par_iter()
        .map(|&t| {
            if t == T::zero() {
                return CVec::<T>::zeros(n);
            }
            let b_t = sp.h_realization(&fp.eval(t));
            let mut acc = CVec::<T>::zeros(n);
            for (s, w) in volterra_rule(grid, t, min_width) {
                let b_s = sp.h_realization(&fp.eval(s));
                let kernel = expm(&b_t.map(|x| x * Complex::new(-(t - s), T::zero())))
                    * (&b_t - b_s);
                let hval = interp_nodes(grid, h, s);
                acc += (kernel * hval).map(|x| x * Complex::new(w, T::zero()));
            }
            acc
        })
        .collect();
    Ok(out)
}

/// `(Q^mu g)(t_i)` with the kernel
/// `(B(t_i)+mu) e^{-(t_i-s)(B(t_i)+mu)} (B(t_i)-B(s)) (B(s)+mu)^{-1}` and
/// `g` interpolated from node samples.
pub fn apply_q<T: Scalar>(
    fp: &FormPath<T>,
    mu: T,
    grid: &TimeGrid<T>,
    g: &[CVec<T>],
) -> Result<Vec<CVec<T>>> {
    if g.len() != grid.nodes().len() {
        return Err(Error::DimensionMismatch { expected: grid.nodes().len(), got: g.len() });
    }
    if mu < T::zero() {
        return Err(Error::Invalid("mu must be nonnegative".into()));
    }
    let sp = fp.space();
    let n = sp.dim();
    let eye = CMat::<T>::identity(n, n);
    let min_width = grid.horizon() * real(GRADE_MIN_FACTOR);
    let shifted = |t: T| sp.h_realization(&fp.eval(t)) + eye.map(|x| x * Complex::new(mu, T::zero()));
    let mut out = Vec::with_capacity(g.len());
    for &t in grid.nodes() {
        if t == T::zero() {
            out.push(CVec::<T>::zeros(n));
            continue;
        }
        let b_t = shifted(t);
        let mut acc = CVec::<T>::zeros(n);
        for (s, w) in volterra_rule(grid, t, min_width) {
            let b_s = shifted(s);
            let inv_s = linalg::lu_inverse(&b_s, to_f64(s))?;
            let diff = &b_t - &b_s;
            let kernel =
                &b_t * expm(&b_t.map(|x| x * Complex::new(-(t - s), T::zero()))) * diff * inv_s;
            let gval = interp_nodes(grid, g, s);
            acc += (kernel * gval).map(|x| x * Complex::new(w, T::zero()));
        }
        out.push(acc);
    }
    Ok(out)
}

/// Norm estimate for the discrete `Q^mu` kernel.
#[derive(Clone, Copy, Debug)]
pub struct QNormEstimate<T: Scalar> {
    pub value: T,
    /// Set when power iteration failed to settle and the value is the
    /// Frobenius upper bound instead.
    pub coarse: bool,
}

/// Assemble the discrete `Q^mu` kernel on the cell Gauss abscissae and
/// estimate its `L²(0,T;H)`-weighted operator norm by power iteration
/// (30 sweeps, relative tolerance 1e-6).
pub fn q_norm_estimate<T: Scalar>(
    fp: &FormPath<T>,
    mu: T,
    grid: &TimeGrid<T>,
) -> Result<QNormEstimate<T>> {
    let sp = fp.space();
    let n = sp.dim();
    let eye = CMat::<T>::identity(n, n);
    let chol = linalg::cholesky_pd(sp.gram_h())?;
    let l_adj = chol.l().adjoint();
    let l_adj_inv =
        linalg::lu_inverse(&CMat::<T>::from(l_adj.clone()), f64::NAN)?;

    // Flattened abscissa list with weights.
    let mut points: Vec<(T, T)> = Vec::new();
    for j in 0..grid.cells() {
        points.extend(grid.cell_rule(j));
    }
    let p = points.len();
    let shifted = |t: T| sp.h_realization(&fp.eval(t)) + eye.map(|x| x * Complex::new(mu, T::zero()));

    // Source-side inverses are shared across rows.
    let inverses: Result<Vec<CMat<T>>> =
        points.iter().map(|&(s, _)| linalg::lu_inverse(&shifted(s), to_f64(s))).collect();
    let inverses = inverses?;

    // Hat coordinates: g_hat = sqrt(w) L^H g makes the weighted L²(0,T;H)
    // norm the plain Euclidean one, so the operator norm is sigma_max of
    // the block matrix below.
    let order = grid.gauss_order();
    let uniform_h = grid.uniform_cell_width();
    let times: Vec<T> = points.iter().map(|&(s, _)| s).collect();
    let shifted_mats: Vec<CMat<T>> = points.iter().map(|&(s, _)| shifted(s)).collect();
    let blocks_nested: Vec<Vec<(usize, usize, CMat<T>)>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let (t, wt) = points[i];
            let b_t = &shifted_mats[i];
            let mut row = Vec::new();
            let mut push = |j: usize, e: &CMat<T>| {
                let (s, ws) = points[j];
                let _ = s;
                let diff = b_t - &shifted_mats[j];
                let kernel = b_t * e * diff * &inverses[j];
                let scale = Complex::new(ws * (wt / ws).sqrt(), T::zero());
                let hat = &l_adj * kernel * &l_adj_inv;
                row.push((i, j, hat.map(|x| x * scale)));
            };
            let cell = i / order;
            shared_exponentials(b_t, t, cell, order, &times, uniform_h, |j, _, e| push(j, e));
            for (j, &s) in times.iter().enumerate().take(i).skip(cell * order) {
                let e = expm(&b_t.map(|x| x * Complex::new(-(t - s), T::zero())));
                push(j, &e);
            }
            row
        })
        .collect();
    let blocks: Vec<(usize, usize, CMat<T>)> = blocks_nested.into_iter().flatten().collect();

    let apply = |v: &CVec<T>| -> CVec<T> {
        let mut out = CVec::<T>::zeros(p * n);
        for (i, j, m) in &blocks {
            let src = v.rows(j * n, n).into_owned();
            let dst = m * src;
            for k in 0..n {
                out[i * n + k] += dst[k];
            }
        }
        out
    };
    let apply_adjoint = |v: &CVec<T>| -> CVec<T> {
        let mut out = CVec::<T>::zeros(p * n);
        for (i, j, m) in &blocks {
            let src = v.rows(i * n, n).into_owned();
            let dst = m.adjoint() * src;
            for k in 0..n {
                out[j * n + k] += dst[k];
            }
        }
        out
    };

    let (value, converged) =
        linalg::power_iteration_norm(p * n, apply, apply_adjoint, 30, real(1e-6));
    if converged {
        Ok(QNormEstimate { value, coarse: false })
    } else {
        let frob = blocks
            .iter()
            .map(|(_, _, m)| m.norm_squared())
            .fold(T::zero(), |a, b| a + b)
            .sqrt();
        Ok(QNormEstimate { value: frob, coarse: true })
    }
}

/// The four solution-space norms of a trajectory plus their components.
#[derive(Clone, Copy, Debug)]
pub struct SolutionNorms<T: Scalar> {
    /// `L²(0,T;V)` of the values.
    pub l2_v: T,
    /// `L²(0,T;H)` of the values.
    pub l2_h: T,
    /// `L²(0,T;H)` of the derivative.
    pub l2_dot_h: T,
    /// `L²(0,T;V')` of the derivative.
    pub l2_dot_vp: T,
    /// `MR₂(V,V')` norm: `L²(V)` component plus `L²(V')` derivative component.
    pub mr2_vvp: T,
    /// `MR₂(V,H)` norm: `L²(V)` component plus `L²(H)` derivative component.
    pub mr2_vh: T,
    pub sup_h: T,
    pub sup_v: T,
    /// Full `H¹(0,T;H)` norm.
    pub h1_h: T,
}

/// Cell-wise Gauss quadrature of the scale norms of the cubic Hermite
/// interpolant; sup norms are node maxima.
pub fn solution_norms<T: Scalar>(sp: &SpacePair<T>, traj: &Trajectory<T>) -> SolutionNorms<T> {
    let mut sq_v = T::zero();
    let mut sq_h = T::zero();
    let mut sq_dot_h = T::zero();
    let mut sq_dot_vp = T::zero();
    for j in 0..traj.grid.cells() {
        for (t, w) in traj.grid.cell_rule(j) {
            let (value, deriv) = traj.hermite(j, t);
            sq_v += w * sp.v_norm(&value).powi(2);
            sq_h += w * sp.h_norm(&value).powi(2);
            sq_dot_h += w * sp.h_norm(&deriv).powi(2);
            sq_dot_vp += w * sp.scale_norm(&deriv, -T::one()).expect("sigma -1 valid").powi(2);
        }
    }
    let mut sup_h = T::zero();
    let mut sup_v = T::zero();
    for v in &traj.values {
        sup_h = sup_h.max(sp.h_norm(v));
        sup_v = sup_v.max(sp.v_norm(v));
    }
    let l2_v = sq_v.sqrt();
    let l2_h = sq_h.sqrt();
    let l2_dot_h = sq_dot_h.sqrt();
    let l2_dot_vp = sq_dot_vp.sqrt();
    SolutionNorms {
        l2_v,
        l2_h,
        l2_dot_h,
        l2_dot_vp,
        mr2_vvp: l2_v + l2_dot_vp,
        mr2_vh: l2_v + l2_dot_h,
        sup_h,
        sup_v,
        h1_h: (sq_h + sq_dot_h).sqrt(),
    }
}

/// `L²(0,T;H)` and `L²(0,T;V')` norms of a source term on a grid, for data
/// normalization.
pub fn source_norms<T: Scalar>(
    sp: &SpacePair<T>,
    f: &SourceTerm<T>,
    grid: &TimeGrid<T>,
) -> (T, T) {
    let n = sp.dim();
    let mut sq_h = T::zero();
    let mut sq_vp = T::zero();
    for j in 0..grid.cells() {
        for (t, w) in grid.cell_rule(j) {
            let v = f.eval(t, n);
            sq_h += w * sp.h_norm(&v).powi(2);
            sq_vp += w * sp.scale_norm(&v, -T::one()).expect("sigma -1 valid").powi(2);
        }
    }
    (sq_h.sqrt(), sq_vp.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::FormPath;
    use crate::hilbert::SpacePair;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    type M = DMatrix<Complex<f64>>;
    type V = CVec<f64>;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn scalar_space() -> Arc<SpacePair<f64>> {
        Arc::new(SpacePair::identity(1))
    }

    fn one() -> V {
        V::from_vec(vec![c(1.0, 0.0)])
    }

    #[test]
    fn oracle_scalar_exponential() {
        let fp = FormPath::scalar_poly(scalar_space(), 1.0, vec![c(1.0, 0.0)]);
        let grid = TimeGrid::uniform(1.0, 64, 4).unwrap();
        let traj = oracle_solve(&fp, &SourceTerm::Zero, &one(), &grid, 2).unwrap();
        let expected = (-1.0f64).exp();
        let got = traj.values.last().unwrap()[0].re;
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        // Derivative residual is zero by construction.
        let last_t = 1.0;
        let residual =
            traj.derivatives.last().unwrap()[0] + fp.eval(last_t)[(0, 0)] * traj.values.last().unwrap()[0];
        assert!(residual.norm() < 1e-14);
    }

    #[test]
    fn oracle_separable_coefficient() {
        let fp = FormPath::scalar_poly(scalar_space(), 1.0, vec![c(1.0, 0.0), c(1.0, 0.0)]);
        let grid = TimeGrid::uniform(1.0, 64, 4).unwrap();
        let traj = oracle_solve(&fp, &SourceTerm::Zero, &one(), &grid, 2).unwrap();
        let expected = (-1.5f64).exp();
        let got = traj.values.last().unwrap()[0].re;
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn oracle_variation_of_constants() {
        let fp = FormPath::scalar_poly(scalar_space(), 1.0, vec![c(1.0, 0.0)]);
        let grid = TimeGrid::uniform(1.0, 64, 4).unwrap();
        let traj = oracle_solve(
            &fp,
            &SourceTerm::Constant(one()),
            &V::zeros(1),
            &grid,
            2,
        )
        .unwrap();
        for (k, &t) in grid.nodes().iter().enumerate() {
            let expected = 1.0 - (-t).exp();
            assert!((traj.values[k][0].re - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn at_u1_values() {
        let sp = scalar_space();
        let grid = TimeGrid::uniform(1.0, 4, 4).unwrap();
        // t = 0 reproduces u0 exactly.
        let fp = FormPath::scalar_poly(sp.clone(), 1.0, vec![c(2.0, 0.0)]);
        let u1 = at_u1(&fp, &grid, &one());
        assert_eq!(u1[0][0], c(1.0, 0.0));
        // Autonomous c = 2 at t = 0.5.
        assert!((u1[2][0].re - (-1.0f64).exp()).abs() < 1e-13);
        // Frozen coefficient at t = 1 for c(t) = 1 + t: e^{-2}, which is
        // deliberately not the true solution e^{-1.5}.
        let fp_lin = FormPath::scalar_poly(sp, 1.0, vec![c(1.0, 0.0), c(1.0, 0.0)]);
        let u1_lin = at_u1(&fp_lin, &grid, &one());
        assert!((u1_lin[4][0].re - (-2.0f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn at_u2_matches_closed_form_and_oracle() {
        let sp = scalar_space();
        let fp = FormPath::scalar_poly(sp.clone(), 1.0, vec![c(1.0, 0.0)]);
        let grid = TimeGrid::uniform(1.0, 16, 4).unwrap();
        let zeros = at_u2(&fp, &grid, &SourceTerm::Zero);
        assert!(zeros.iter().all(|v| v.norm() == 0.0));
        let u2 = at_u2(&fp, &grid, &SourceTerm::Constant(one()));
        for (k, &t) in grid.nodes().iter().enumerate() {
            let expected = 1.0 - (-t).exp();
            assert!((u2[k][0].re - expected).abs() < 1e-10, "t={t}");
        }

        // Autonomous matrix case against the oracle with u0 = 0.
        let space2 = Arc::new(SpacePair::<f64>::identity(2));
        let a = M::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.5, 0.1), c(0.0, -0.2), c(3.0, 0.0)]);
        let fpm = FormPath::autonomous(space2.clone(), 1.0, a);
        let f = SourceTerm::Constant(V::from_vec(vec![c(1.0, 0.0), c(-0.5, 0.5)]));
        let gridm = TimeGrid::uniform(1.0, 32, 4).unwrap();
        let u2m = at_u2(&fpm, &gridm, &f);
        let oracle = oracle_solve(&fpm, &f, &V::zeros(2), &gridm, 4).unwrap();
        let sup: f64 = oracle
            .values
            .iter()
            .map(|v| space2.h_norm(v))
            .fold(0.0, f64::max);
        for k in 0..gridm.nodes().len() {
            let diff = space2.h_norm(&(&u2m[k] - &oracle.values[k]));
            assert!(diff / sup < 1e-8, "node {k}: {diff}");
        }
    }

    #[test]
    fn apply_p_trivial_cases() {
        let fp = FormPath::autonomous(scalar_space(), 1.0, M::from_row_slice(1, 1, &[c(2.0, 0.0)]));
        let grid = TimeGrid::uniform(1.0, 8, 4).unwrap();
        let h: Vec<V> = grid.nodes().iter().map(|&t| V::from_vec(vec![c(t + 1.0, 0.0)])).collect();
        let ph = apply_p(&fp, &grid, &h).unwrap();
        assert!(ph.iter().all(|v| v.norm() == 0.0));

        let fp_lin =
            FormPath::scalar_poly(scalar_space(), 1.0, vec![c(1.0, 0.0), c(1.0, 0.0)]);
        let zeros: Vec<V> = grid.nodes().iter().map(|_| V::zeros(1)).collect();
        let pz = apply_p(&fp_lin, &grid, &zeros).unwrap();
        assert!(pz.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn apply_q_trivial_cases() {
        let grid = TimeGrid::uniform(1.0, 8, 4).unwrap();
        let fp = FormPath::autonomous(scalar_space(), 1.0, M::from_row_slice(1, 1, &[c(2.0, 0.0)]));
        let g: Vec<V> = grid.nodes().iter().map(|&t| V::from_vec(vec![c(1.0 - t, 0.0)])).collect();
        let qg = apply_q(&fp, 1.0, &grid, &g).unwrap();
        assert!(qg.iter().all(|v| v.norm() == 0.0));

        let fp_lin =
            FormPath::scalar_poly(scalar_space(), 1.0, vec![c(1.0, 0.0), c(1.0, 0.0)]);
        let zeros: Vec<V> = grid.nodes().iter().map(|_| V::zeros(1)).collect();
        let qz = apply_q(&fp_lin, 0.0, &grid, &zeros).unwrap();
        assert!(qz.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn q_norm_zero_for_autonomous_and_decreasing_in_mu() {
        let grid = TimeGrid::uniform(1.0, 24, 2).unwrap();
        let fp_auto =
            FormPath::autonomous(scalar_space(), 1.0, M::from_row_slice(1, 1, &[c(2.0, 0.0)]));
        let est = q_norm_estimate(&fp_auto, 0.0, &grid).unwrap();
        assert!(est.value < 1e-12);

        let fp = FormPath::scalar_poly(scalar_space(), 1.0, vec![c(1.0, 0.0), c(1.0, 0.0)]);
        let ladder = [0.0, 10.0, 100.0, 1000.0];
        let mut prev = f64::INFINITY;
        for &mu in &ladder {
            let est = q_norm_estimate(&fp, mu, &grid).unwrap();
            assert!(
                est.value <= prev + 1e-9,
                "q({mu}) = {} after {prev}",
                est.value
            );
            prev = est.value;
        }
        assert!(prev < 0.5, "final q {prev}");
    }

    #[test]
    fn solution_norms_closed_form() {
        let sp = scalar_space();
        let fp = FormPath::scalar_poly(sp.clone(), 1.0, vec![c(1.0, 0.0)]);
        let grid = TimeGrid::uniform(1.0, 64, 4).unwrap();
        let traj = oracle_solve(&fp, &SourceTerm::Zero, &one(), &grid, 2).unwrap();
        let norms = solution_norms(&sp, &traj);
        assert!((norms.sup_h - 1.0).abs() < 1e-12);
        let expected_l2 = ((1.0 - (-2.0f64).exp()) / 2.0).sqrt();
        assert!((norms.l2_h - expected_l2).abs() < 1e-8, "{} vs {expected_l2}", norms.l2_h);
        // For the identity couple every scale norm coincides.
        assert!((norms.l2_v - norms.l2_h).abs() < 1e-12);

        let zero = Trajectory {
            grid: grid.clone(),
            values: grid.nodes().iter().map(|_| V::zeros(1)).collect(),
            derivatives: grid.nodes().iter().map(|_| V::zeros(1)).collect(),
            provenance: Provenance::Derived,
        };
        let znorms = solution_norms(&sp, &zero);
        assert_eq!(znorms.mr2_vvp, 0.0);
        assert_eq!(znorms.sup_v, 0.0);
    }

    #[test]
    fn oracle_linearity() {
        let fp = FormPath::scalar_poly(scalar_space(), 1.0, vec![c(1.0, 0.0), c(0.5, 0.0)]);
        let grid = TimeGrid::uniform(1.0, 16, 4).unwrap();
        let f = SourceTerm::Constant(one());
        let base = oracle_solve(&fp, &f, &one(), &grid, 2).unwrap();
        let scaled_f = SourceTerm::Constant(V::from_vec(vec![c(3.0, 0.0)]));
        let scaled =
            oracle_solve(&fp, &scaled_f, &V::from_vec(vec![c(3.0, 0.0)]), &grid, 2).unwrap();
        for k in 0..grid.nodes().len() {
            let diff = (&scaled.values[k] - base.values[k].map(|x| x * c(3.0, 0.0))).norm();
            assert!(diff < 1e-12 * scaled.values[k].norm().max(1.0));
        }
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::<f64>::uniform(1.0, 0, 4).is_err());
        assert!(TimeGrid::from_nodes(vec![0.0, 0.5, 0.5], 4).is_err());
        assert!(TimeGrid::from_nodes(vec![0.1, 0.5], 4).is_err());
    }
}
