//! Fixed-point solver built on the frozen-coefficient representation
//! `u(t) = e^{-tB(t)} u0 + ∫ e^{-(t-s)B(t)} f(s) ds + (P u)(t)` with
//! `(P u)(t) = ∫ e^{-(t-s)B(t)} (B(t) - B(s)) u(s) ds`.
//!
//! The iteration runs on the μ-shifted problem: with `w(t) = e^{-μt} u(t)`
//! the unknown solves the same equation for `B + μ` and source
//! `e^{-μs} f(s)`, and the correction operator contracts once μ is large
//! enough. μ comes from a ladder search targeting a norm bound of 1/2.
//!
//! Discretization: the unknown is the correction `z = w - u1 - u2` sampled
//! at the cell Gauss points. The sources `u1`, `u2` are evaluated exactly
//! wherever the quadrature needs them (for polynomial-in-time sources
//! through one augmented matrix exponential per point), so only the smooth
//! correction is ever interpolated. Quadrature toward each target point is
//! geometrically graded, and the frozen exponentials are cached so each
//! Neumann sweep is a pass of small mat-vecs.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forms::FormPath;
use crate::linalg::{self, CMat, CVec};
use crate::scalar::{real, to_f64, Scalar};
use crate::semigroup::expm;

use super::{derivatives_from_equation, Provenance, SourceTerm, TimeGrid, Trajectory};

/// Knobs for [`at_solve`]. The μ ladder is `0, 10, 100, ...` capped both by
/// `mu_cap` and by the overflow guard `mu * T <= 400`.
#[derive(Clone, Copy, Debug)]
pub struct AtConfig<T: Scalar> {
    pub mu_cap: T,
    /// Ladder target for the contraction bound.
    pub target_q: T,
    /// Hard ceiling: no μ below the cap reaching this bound is an error.
    pub q_cap: T,
    /// Relative stopping tolerance in the discrete `C([0,T];H)` norm.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for AtConfig<T> {
    fn default() -> Self {
        Self {
            mu_cap: real(1000.0),
            target_q: real(0.5),
            q_cap: real(0.95),
            tol: real(1e-10),
            max_iter: 500,
        }
    }
}

/// Diagnostics of an [`at_solve`] run.
#[derive(Clone, Debug)]
pub struct AtReport<T: Scalar> {
    pub mu: T,
    /// Row-sum (Frobenius) bound for the correction operator at the chosen μ.
    pub q_estimate: T,
    pub iterations: usize,
    /// Final sup-H increment, relative to the data scale.
    pub last_increment: T,
    /// Ladder log: `(mu, coarse q bound)` pairs that were inspected.
    pub ladder: Vec<(T, T)>,
}

const GRADE_MIN_FACTOR: f64 = 1e-4;

/// Reference to a source sample: a shared Gauss point `(cell, q)`.
type SharedId = usize;

struct Workspace<T: Scalar> {
    /// Unshifted H-realizations at shared points.
    b0_shared: Vec<CMat<T>>,
    b0_nodes: Vec<CMat<T>>,
    /// `u1 + u2` of the shifted problem at shared points / nodes.
    w0_shared: Vec<CVec<T>>,
    w0_nodes: Vec<CVec<T>>,
    shared_times: Vec<T>,
}

/// Solve the Cauchy problem through the frozen-coefficient representation.
///
/// Returns the trajectory (derivatives recovered from the unshifted
/// equation) together with the run diagnostics.
pub fn at_solve<T: Scalar>(
    fp: &FormPath<T>,
    f: &SourceTerm<T>,
    u0: &CVec<T>,
    grid: &TimeGrid<T>,
    cfg: &AtConfig<T>,
) -> Result<(Trajectory<T>, AtReport<T>)> {
    let sp = fp.space();
    let n = sp.dim();
    if u0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u0.len() });
    }
    let horizon = grid.horizon();
    let order = grid.gauss_order();
    let cells = grid.cells();
    let min_width = horizon * real(GRADE_MIN_FACTOR);
    let poly = f.poly_vectors(n);

    // Shared Gauss points, flattened cell-major.
    let mut shared_times = Vec::with_capacity(cells * order);
    let mut shared_weights = Vec::with_capacity(cells * order);
    for j in 0..cells {
        for (s, w) in grid.cell_rule(j) {
            shared_times.push(s);
            shared_weights.push(w);
        }
    }

    let b0_shared: Vec<CMat<T>> =
        shared_times.par_iter().map(|&s| sp.h_realization(&fp.eval(s))).collect();
    let b0_nodes: Vec<CMat<T>> =
        grid.nodes().par_iter().map(|&t| sp.h_realization(&fp.eval(t))).collect();

    // Coarse contraction table: node targets, no grading, kernel Frobenius
    // norms at mu = 0. Every ladder trial reuses it through the exact
    // factorization  exp(-d(B+mu)) = e^{-mu d} exp(-dB).
    let uniform_h = grid.uniform_cell_width();
    let coarse: Vec<Vec<(T, T)>> = (1..grid.nodes().len())
        .into_par_iter()
        .map(|i| {
            let t = grid.nodes()[i];
            let b_t = &b0_nodes[i];
            let mut row = Vec::new();
            super::shared_exponentials(
                b_t,
                t,
                i,
                order,
                &shared_times,
                uniform_h,
                |idx, gap, e| {
                    let k = e * (b_t - &b0_shared[idx]);
                    row.push((gap, shared_weights[idx] * k.norm()));
                },
            );
            row
        })
        .collect();
    let coarse_q = |mu: T| -> T {
        let mut worst = T::zero();
        for row in &coarse {
            let mut acc = T::zero();
            for &(gap, wn) in row {
                acc += (-mu * gap).exp() * wn;
            }
            worst = worst.max(acc);
        }
        worst
    };

    let mut mus: Vec<T> = vec![T::zero()];
    let mut m: T = real(10.0);
    let overflow_guard: T = real::<T>(400.0) / horizon.max(real(1e-6));
    while m <= cfg.mu_cap && m <= overflow_guard {
        mus.push(m);
        m *= real(10.0);
    }
    let mut ladder = Vec::new();
    let mut chosen: Option<(T, T)> = None;
    for &mu in &mus {
        let q = coarse_q(mu);
        ladder.push((mu, q));
        if q <= cfg.target_q {
            chosen = Some((mu, q));
            break;
        }
    }
    let (mu, _) = match chosen {
        Some(pair) => pair,
        None => {
            let &(mu, q) = ladder
                .iter()
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
                .expect("ladder nonempty");
            if q >= cfg.q_cap {
                return Err(Error::NoContraction { q: to_f64(q), mu_cap: to_f64(cfg.mu_cap) });
            }
            (mu, q)
        }
    };

    // Source values w0 = u1 + u2 of the shifted problem.
    let w0_at = |s: T, b0_s: &CMat<T>| -> Result<CVec<T>> {
        w0_exact(sp, f, u0, s, b0_s, mu, poly.as_deref(), grid, min_width)
    };
    let w0_shared: Result<Vec<CVec<T>>> = shared_times
        .par_iter()
        .zip(b0_shared.par_iter())
        .map(|(&s, b0)| w0_at(s, b0))
        .collect();
    let w0_shared = w0_shared?;
    let w0_nodes: Result<Vec<CVec<T>>> = grid
        .nodes()
        .par_iter()
        .zip(b0_nodes.par_iter())
        .map(|(&t, b0)| w0_at(t, b0))
        .collect();
    let w0_nodes = w0_nodes?;

    let ws = Workspace {
        b0_shared,
        b0_nodes,
        w0_shared,
        w0_nodes,
        shared_times,
    };

    // Targets: shared points first, then the nodes 1..=K.
    enum Target {
        Shared(SharedId),
        Node(usize),
    }
    let mut targets = Vec::with_capacity(ws.shared_times.len() + cells);
    for idx in 0..ws.shared_times.len() {
        targets.push(Target::Shared(idx));
    }
    for i in 1..grid.nodes().len() {
        targets.push(Target::Node(i));
    }

    struct Row<T: Scalar> {
        /// Merged matrices acting on the shared z samples `0..len`.
        mats: Vec<CMat<T>>,
        /// `P(w0)` folded at assembly time (graded part exact).
        forced: CVec<T>,
        /// Row-sum Frobenius bound.
        q_bound: T,
    }

    let assemble_row = |tau: T, cell: usize, b_tau: &CMat<T>| -> Result<Row<T>> {
        let n_shared = (cell + 1) * order;
        let mut mats = vec![CMat::<T>::zeros(n, n); n_shared];
        let mut forced = CVec::<T>::zeros(n);
        let mut q_bound = T::zero();
        // Full cells strictly below the containing cell.
        super::shared_exponentials(
            b_tau,
            tau,
            cell,
            order,
            &ws.shared_times,
            uniform_h,
            |idx, gap, e| {
                let scale = Complex::new((-mu * gap).exp() * shared_weights[idx], T::zero());
                let kernel = e * (b_tau - &ws.b0_shared[idx]);
                let m = kernel.map(|x| x * scale);
                q_bound += m.norm();
                forced += &m * &ws.w0_shared[idx];
                mats[idx] += m;
            },
        );
        // Graded remainder [t_cell, tau], with z interpolated from the
        // containing cell's Gauss samples.
        let start = grid.nodes()[cell];
        if tau > start {
            let cell_points: Vec<T> =
                (0..order).map(|q| ws.shared_times[cell * order + q]).collect();
            let bounds = super::graded_partition(start, tau, min_width);
            for wnd in bounds.windows(2) {
                for (s, w) in linalg::gauss_on_interval(order, wnd[0], wnd[1]) {
                    let gap = tau - s;
                    let b0_s = sp.h_realization(&fp.eval(s));
                    let scale = Complex::new((-mu * gap).exp() * w, T::zero());
                    let kernel = expm(&b_tau.map(|x| x * Complex::new(-gap, T::zero())))
                        * (b_tau - &b0_s);
                    let m = kernel.map(|x| x * scale);
                    q_bound += m.norm();
                    let w0_here = match poly.as_deref() {
                        Some(_) => w0_at(s, &b0_s)?,
                        None => {
                            // Rough sources: u1 exact, u2 interpolated within
                            // the cell from the shared samples.
                            let u1 = expm(&b0_s.map(|x| {
                                x * Complex::new(-s, T::zero())
                            })) * u0;
                            let mut u2 = CVec::<T>::zeros(n);
                            for (q, &x) in cell_points.iter().enumerate() {
                                let idx = cell * order + q;
                                let u1_there = expm(&ws.b0_shared[idx].map(|y| {
                                    y * Complex::new(-x, T::zero())
                                })) * u0;
                                let lw = lagrange_weight(&cell_points, q, s);
                                u2 += (&ws.w0_shared[idx]
                                    - u1_there.map(|y| y * Complex::new((-mu * x).exp(), T::zero())))
                                    .map(|y| y * Complex::new(lw, T::zero()));
                            }
                            u1.map(|y| y * Complex::new((-mu * s).exp(), T::zero())) + u2
                        }
                    };
                    forced += &m * w0_here;
                    // Merge the z-interpolation into the shared samples.
                    for (q, _) in cell_points.iter().enumerate() {
                        let lw = lagrange_weight(&cell_points, q, s);
                        mats[cell * order + q] += m.map(|x| x * Complex::new(lw, T::zero()));
                    }
                }
            }
        }
        Ok(Row { mats, forced, q_bound })
    };

    let rows: Result<Vec<Row<T>>> = targets
        .par_iter()
        .map(|t| match *t {
            Target::Shared(idx) => {
                let tau = ws.shared_times[idx];
                assemble_row(tau, idx / order, &ws.b0_shared[idx])
            }
            Target::Node(i) => assemble_row(grid.nodes()[i], i - 1, &ws.b0_nodes[i]),
        })
        .collect();
    let rows = rows?;
    let q_estimate = rows.iter().map(|r| r.q_bound).fold(T::zero(), T::max);
    if q_estimate >= T::one() {
        // The coarse ladder bound was too optimistic; refuse rather than
        // iterate a divergent series.
        return Err(Error::NoContraction { q: to_f64(q_estimate), mu_cap: to_f64(cfg.mu_cap) });
    }

    // Data scale in unshifted units for the stopping rule.
    let mut scale = T::zero();
    for (i, w0) in ws.w0_nodes.iter().enumerate() {
        let t = grid.nodes()[i];
        scale = scale.max((mu * t).exp() * sp.h_norm(w0));
    }
    let scale = scale.max(real(1e-300));

    let n_shared_total = ws.shared_times.len();
    let mut z = vec![CVec::<T>::zeros(n); n_shared_total];
    let mut z_nodes = vec![CVec::<T>::zeros(n); grid.nodes().len()];
    let mut iterations = 0usize;
    let mut last_increment = T::zero();
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let new_states: Vec<CVec<T>> = rows
            .par_iter()
            .map(|row| {
                let mut acc = row.forced.clone();
                for (idx, m) in row.mats.iter().enumerate() {
                    acc += m * &z[idx];
                }
                acc
            })
            .collect();
        let mut increment = T::zero();
        for (k, target) in targets.iter().enumerate() {
            match *target {
                Target::Shared(idx) => {
                    let tau = ws.shared_times[idx];
                    let diff = sp.h_norm(&(&new_states[k] - &z[idx]));
                    increment = increment.max((mu * tau).exp() * diff);
                    z[idx] = new_states[k].clone();
                }
                Target::Node(i) => {
                    let tau = grid.nodes()[i];
                    let diff = sp.h_norm(&(&new_states[k] - &z_nodes[i]));
                    increment = increment.max((mu * tau).exp() * diff);
                    z_nodes[i] = new_states[k].clone();
                }
            }
        }
        last_increment = increment / scale;
        if last_increment <= cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergent {
            max_iter: cfg.max_iter,
            increment: to_f64(last_increment),
        });
    }

    // Undo the shift: u(t) = e^{+mu t} (w0 + z).
    let values: Vec<CVec<T>> = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let back = Complex::new((mu * t).exp(), T::zero());
            (&ws.w0_nodes[i] + &z_nodes[i]).map(|x| x * back)
        })
        .collect();
    let derivatives = derivatives_from_equation(fp, f, grid, &values);
    Ok((
        Trajectory { grid: grid.clone(), values, derivatives, provenance: Provenance::AtSolver },
        AtReport { mu, q_estimate, iterations, last_increment, ladder },
    ))
}

fn lagrange_weight<T: Scalar>(points: &[T], q: usize, s: T) -> T {
    let mut w = T::one();
    for (r, &x) in points.iter().enumerate() {
        if r != q {
            w *= (s - x) / (points[q] - x);
        }
    }
    w
}

/// Exact `w0 = u1 + u2` of the μ-shifted problem at time `s`.
///
/// Polynomial sources go through one augmented exponential; other sources
/// fall back to graded quadrature for the `u2` integral.
#[allow(clippy::too_many_arguments)]
fn w0_exact<T: Scalar>(
    sp: &crate::hilbert::SpacePair<T>,
    f: &SourceTerm<T>,
    u0: &CVec<T>,
    s: T,
    b0_s: &CMat<T>,
    mu: T,
    poly: Option<&[CVec<T>]>,
    grid: &TimeGrid<T>,
    min_width: T,
) -> Result<CVec<T>> {
    let n = sp.dim();
    let decay = Complex::new((-mu * s).exp(), T::zero());
    if s == T::zero() {
        return Ok(u0.clone());
    }
    match poly {
        Some(coeff_vecs) => {
            // State [I; p_0; ...; p_d], p_j = r^j/j!:
            //   I' = -B0 I + sum_j (j! c_j) p_j,  p_j' = p_{j-1},  p_0' = 0.
            // exp(sL) applied to e_{p_0} yields I(s) in the top block, and
            // its top-left block is e^{-s B0} for the u1 part.
            let d = coeff_vecs.len();
            let dim = n + d;
            let mut l = CMat::<T>::zeros(dim, dim);
            l.view_mut((0, 0), (n, n)).copy_from(&b0_s.map(|x| -x));
            let mut factorial = T::one();
            for (j, c) in coeff_vecs.iter().enumerate() {
                if j > 0 {
                    factorial *= real(j as f64);
                }
                let col = n + j;
                for i in 0..n {
                    l[(i, col)] = c[i] * Complex::new(factorial, T::zero());
                }
                if j > 0 {
                    l[(n + j, n + j - 1)] = Complex::new(T::one(), T::zero());
                }
            }
            let e = expm(&l.map(|x| x * Complex::new(s, T::zero())));
            let u1 = e.view((0, 0), (n, n)) * u0;
            let integral = e.view((0, n), (n, 1)).column(0).into_owned();
            Ok((u1 + integral).map(|x| x * decay))
        }
        None => {
            let u1 = expm(&b0_s.map(|x| x * Complex::new(-s, T::zero()))) * u0;
            let mut integral = CVec::<T>::zeros(n);
            for (r, w) in super::volterra_rule(grid, s, min_width) {
                let kernel = expm(&b0_s.map(|x| x * Complex::new(-(s - r), T::zero())));
                integral += (kernel * f.eval(r, n)).map(|x| x * Complex::new(w, T::zero()));
            }
            Ok((u1 + integral).map(|x| x * decay))
        }
    }
}
