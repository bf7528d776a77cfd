//! Convergence studies over mesh ladders.
//!
//! For each ladder entry `m` the affine approximation of the base form is
//! built and its Cauchy problem solved; errors against a once-computed
//! reference solution of the base problem are recorded in all four solution
//! norms and compared with the theorem-side envelope
//! `E(|Λ|) = (1 + |Λ|^{-γ/2}) d_Λ + ∫_0^{2|Λ|} ω(t)/t^{1+γ/2} dt`.

use rayon::prelude::*;

use crate::affine::{build_affine, d_lambda};
use crate::error::{Error, Result};
use crate::forms::{Dini, FormPath, ModulusProfile};
use crate::linalg::CVec;
use crate::scalar::{real, to_f64, Scalar};
use crate::solver::at::{at_solve, AtConfig};
use crate::solver::{oracle_solve, solution_norms, SourceTerm, TimeGrid, Trajectory};

/// Theorem-side error envelope attached to a base-form modulus.
#[derive(Clone, Debug)]
pub struct EnvelopeSpec<T: Scalar> {
    pub gamma: T,
    pub profile: ModulusProfile<T>,
}

impl<T: Scalar> EnvelopeSpec<T> {
    pub fn new(gamma: T, profile: ModulusProfile<T>) -> Self {
        Self { gamma, profile }
    }

    /// Affine-family envelope `(1 + |Λ|^{-γ/2}) d_Λ + ∫_0^{2|Λ|} ω/t^{1+γ/2}`.
    pub fn affine_envelope(&self, mesh: T) -> Dini<T> {
        let d = d_lambda(&self.profile, mesh);
        let amp = T::one() + mesh.powf(-self.gamma * real(0.5));
        match self.profile.dini_tail(mesh * real(2.0)) {
            Dini::Finite(tail) => Dini::Finite(amp * d + tail),
            Dini::Infinite => Dini::Infinite,
        }
    }

    /// Sequence-form envelope `(1 + n^{γ/2}) d_n + ∫_0^{1/n} ω_n/r^{1+γ/2}`.
    pub fn sequence_envelope(&self, n: usize, d_n: T, dini_tail: Dini<T>) -> Dini<T> {
        let amp = T::one() + real::<T>(n as f64).powf(self.gamma * real(0.5));
        match dini_tail {
            Dini::Finite(tail) => Dini::Finite(amp * d_n + tail),
            Dini::Infinite => Dini::Infinite,
        }
    }
}

/// Which solver produces the per-row affine solutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowSolver {
    /// Crank–Nicolson oracle (fast, deeply refinable).
    Oracle,
    /// Fixed-point representation solver; contraction failures mark the
    /// affected row as failed instead of aborting the study.
    At,
}

#[derive(Clone, Debug)]
pub struct StudyConfig<T: Scalar> {
    /// Gauss order used when averaging the form per interval.
    pub quad_order: usize,
    /// Cells of the shared evaluation grid; `None` derives
    /// `clamp(2 * max m, 64, 16384)`.
    pub eval_cells: Option<usize>,
    /// Gauss order of the evaluation grid (norm quadrature).
    pub gauss_order: usize,
    /// Oracle substeps for row solves.
    pub row_substeps: usize,
    /// Oracle substeps for the reference solution (validated against twice
    /// this count).
    pub ref_substeps: usize,
    pub row_solver: RowSolver,
    pub at: AtConfig<T>,
}

impl<T: Scalar> Default for StudyConfig<T> {
    fn default() -> Self {
        Self {
            quad_order: 8,
            eval_cells: None,
            gauss_order: 4,
            row_substeps: 2,
            ref_substeps: 8,
            row_solver: RowSolver::Oracle,
            at: AtConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum RowStatus {
    Ok,
    Failed(String),
}

/// One ladder entry of a convergence study.
#[derive(Clone, Debug)]
pub struct StudyRow<T: Scalar> {
    pub m: usize,
    pub mesh: T,
    pub d_lambda: T,
    pub err_mr2_vvp: T,
    pub err_mr2_vh: T,
    pub err_sup_h: T,
    pub err_sup_v: T,
    pub envelope: T,
    /// Max error over the four columns divided by the envelope.
    pub ratio: T,
    pub runtime_ms: f64,
    /// `H¹(0,T;H)` norm of the affine solution (weak-convergence budget).
    pub h1_h: T,
    pub status: RowStatus,
}

impl<T: Scalar> StudyRow<T> {
    pub fn ok(&self) -> bool {
        matches!(self.status, RowStatus::Ok)
    }

    pub fn max_error(&self) -> T {
        self.err_mr2_vvp.max(self.err_mr2_vh).max(self.err_sup_h).max(self.err_sup_v)
    }
}

#[derive(Clone, Debug)]
pub struct StudyOutcome<T: Scalar> {
    pub rows: Vec<StudyRow<T>>,
    /// Reference self-check: sup-H distance between the reference and its
    /// doubled-substep rerun, relative to the smallest row error.
    pub reference_drift: T,
    pub reference_ok: bool,
}

/// Run the mesh ladder. The reference solution of the base problem is
/// computed once on the shared evaluation grid at `ref_substeps` and
/// validated against a doubled-substep rerun (required below 10% of the
/// smallest row error).
pub fn convergence_study<T: Scalar>(
    fp: &FormPath<T>,
    envelope: &EnvelopeSpec<T>,
    mesh_ladder: &[usize],
    f: &SourceTerm<T>,
    u0: &CVec<T>,
    cfg: &StudyConfig<T>,
) -> Result<StudyOutcome<T>> {
    if mesh_ladder.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    if mesh_ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("mesh ladder must be ascending in m".into()));
    }
    if !envelope.profile.dini_integral.is_finite() {
        return Err(Error::DiniFailure);
    }
    let max_m = *mesh_ladder.last().expect("nonempty");
    let cells = cfg.eval_cells.unwrap_or((2 * max_m).clamp(64, 16384));
    let grid = TimeGrid::uniform(fp.horizon(), cells, cfg.gauss_order)?;
    let sp = fp.space();

    let reference = oracle_solve(fp, f, u0, &grid, cfg.ref_substeps)?;
    let recheck = oracle_solve(fp, f, u0, &grid, cfg.ref_substeps * 2)?;
    let drift = solution_norms(sp, &Trajectory::difference(&reference, &recheck)?).sup_h;

    let rows: Vec<StudyRow<T>> = mesh_ladder
        .par_iter()
        .map(|&m| {
            let started = std::time::Instant::now();
            let run = || -> Result<StudyRow<T>> {
                let afp = build_affine(fp, m, cfg.quad_order)?;
                let mesh = afp.subdivision().mesh();
                let path = afp.as_form_path();
                let traj = match cfg.row_solver {
                    RowSolver::Oracle => oracle_solve(&path, f, u0, &grid, cfg.row_substeps)?,
                    RowSolver::At => at_solve(&path, f, u0, &grid, &cfg.at)?.0,
                };
                let h1_h = solution_norms(sp, &traj).h1_h;
                let diff = Trajectory::difference(&traj, &reference)?;
                let norms = solution_norms(sp, &diff);
                let env = match envelope.affine_envelope(mesh) {
                    Dini::Finite(e) => e,
                    Dini::Infinite => return Err(Error::DiniFailure),
                };
                let max_err =
                    norms.mr2_vvp.max(norms.mr2_vh).max(norms.sup_h).max(norms.sup_v);
                let ratio = if env > T::zero() { max_err / env } else { T::zero() };
                Ok(StudyRow {
                    m,
                    mesh,
                    d_lambda: d_lambda(&envelope.profile, mesh),
                    err_mr2_vvp: norms.mr2_vvp,
                    err_mr2_vh: norms.mr2_vh,
                    err_sup_h: norms.sup_h,
                    err_sup_v: norms.sup_v,
                    envelope: env,
                    ratio,
                    runtime_ms: 0.0,
                    h1_h,
                    status: RowStatus::Ok,
                })
            };
            let mut row = run().unwrap_or_else(|e| StudyRow {
                m,
                mesh: fp.horizon() / real(m as f64),
                d_lambda: T::zero(),
                err_mr2_vvp: T::zero(),
                err_mr2_vh: T::zero(),
                err_sup_h: T::zero(),
                err_sup_v: T::zero(),
                envelope: T::zero(),
                ratio: T::zero(),
                runtime_ms: 0.0,
                h1_h: T::zero(),
                status: RowStatus::Failed(e.to_string()),
            });
            row.runtime_ms = started.elapsed().as_secs_f64() * 1e3;
            row
        })
        .collect();

    let smallest = rows
        .iter()
        .filter(|r| r.ok())
        .map(|r| r.max_error())
        .fold(T::max_value().unwrap_or_else(T::one), T::min);
    let reference_drift =
        if smallest > T::zero() { drift / smallest } else { T::zero() };
    let reference_ok = reference_drift < real(0.1);
    Ok(StudyOutcome { rows, reference_drift, reference_ok })
}

/// Log–log least-squares slopes of the error columns against the mesh.
#[derive(Clone, Copy, Debug)]
pub struct RateFit<T: Scalar> {
    pub mr2_vvp: T,
    pub mr2_vh: T,
    pub sup_h: T,
    pub sup_v: T,
    pub envelope: T,
    /// All errors sat at quadrature noise; slopes are meaningless.
    pub noise_floor: bool,
}

const NOISE_FLOOR: f64 = 1e-8;

pub fn rate_fit<T: Scalar>(rows: &[StudyRow<T>]) -> Result<RateFit<T>> {
    let good: Vec<&StudyRow<T>> = rows.iter().filter(|r| r.ok()).collect();
    if good.len() < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: good.len() });
    }
    let noise_floor = good.iter().all(|r| r.max_error() < real(NOISE_FLOOR));
    if noise_floor {
        return Ok(RateFit {
            mr2_vvp: T::zero(),
            mr2_vh: T::zero(),
            sup_h: T::zero(),
            sup_v: T::zero(),
            envelope: T::zero(),
            noise_floor: true,
        });
    }
    let xs: Vec<T> = good.iter().map(|r| r.mesh.ln()).collect();
    let slope = |pick: &dyn Fn(&StudyRow<T>) -> T| -> T {
        let pairs: Vec<(T, T)> = good
            .iter()
            .zip(xs.iter())
            .filter(|(r, _)| pick(r) > real(NOISE_FLOOR))
            .map(|(r, &x)| (x, pick(r).ln()))
            .collect();
        if pairs.len() < 3 {
            return T::zero();
        }
        let px: Vec<T> = pairs.iter().map(|&(x, _)| x).collect();
        let py: Vec<T> = pairs.iter().map(|&(_, y)| y).collect();
        crate::linalg::linear_fit(&px, &py).map(|(_, s)| s).unwrap_or_else(T::zero)
    };
    Ok(RateFit {
        mr2_vvp: slope(&|r| r.err_mr2_vvp),
        mr2_vh: slope(&|r| r.err_mr2_vh),
        sup_h: slope(&|r| r.err_sup_h),
        sup_v: slope(&|r| r.err_sup_v),
        envelope: slope(&|r| r.envelope),
        noise_floor: false,
    })
}

/// Envelope-dominance validation: the constant is fitted on the coarsest
/// half of the ladder and checked on the finest half.
#[derive(Clone, Copy, Debug)]
pub struct DominanceReport<T: Scalar> {
    pub c_fit: T,
    /// Worst `ratio / c_fit - 1` on the finest half (negative when clean).
    pub worst_violation: T,
    pub pass: bool,
}

pub fn envelope_dominance<T: Scalar>(rows: &[StudyRow<T>]) -> Result<DominanceReport<T>> {
    let good: Vec<&StudyRow<T>> = rows.iter().filter(|r| r.ok()).collect();
    if good.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: good.len() });
    }
    let half = good.len() / 2;
    let c_fit = good[..half.max(1)]
        .iter()
        .map(|r| r.ratio)
        .fold(T::zero(), T::max)
        .max(real(1e-300));
    let worst_violation = good[half.max(1)..]
        .iter()
        .map(|r| r.ratio / c_fit - T::one())
        .fold(-T::one(), T::max);
    Ok(DominanceReport { c_fit, worst_violation, pass: worst_violation <= real(0.10) })
}

#[derive(Clone, Debug)]
pub struct UniformityReport<T: Scalar> {
    pub ratios: Vec<T>,
    pub max_ratio: T,
    pub median_ratio: T,
    pub pass: bool,
}

/// Error/envelope ratio over a batch of normalized data at a fixed mesh.
///
/// Each datum is rescaled so `‖f‖_{L²(0,T;H)} + ‖u0‖_V = 1`; the check
/// passes when the worst ratio stays below three times the median.
pub fn uniformity_check<T: Scalar>(
    fp: &FormPath<T>,
    envelope: &EnvelopeSpec<T>,
    m: usize,
    data_batch: &[(SourceTerm<T>, CVec<T>)],
    cfg: &StudyConfig<T>,
) -> Result<UniformityReport<T>> {
    if data_batch.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let cells = cfg.eval_cells.unwrap_or((2 * m).clamp(64, 16384));
    let grid = TimeGrid::uniform(fp.horizon(), cells, cfg.gauss_order)?;
    let sp = fp.space();
    let afp = build_affine(fp, m, cfg.quad_order)?;
    let path = afp.as_form_path();
    let env = match envelope.affine_envelope(afp.subdivision().mesh()) {
        Dini::Finite(e) if e > T::zero() => e,
        Dini::Finite(_) => return Err(Error::Invalid("zero envelope".into())),
        Dini::Infinite => return Err(Error::DiniFailure),
    };

    let ratios: Result<Vec<T>> = data_batch
        .par_iter()
        .map(|(f, u0)| {
            let (f_h, _) = crate::solver::source_norms(sp, f, &grid);
            let weight = f_h + sp.v_norm(u0);
            if weight <= T::zero() {
                return Err(Error::Invalid("zero datum in batch".into()));
            }
            let scale = num_complex::Complex::new(T::one() / weight, T::zero());
            let f = scale_source(f, scale);
            let u0 = u0.map(|x| x * scale);
            let reference = oracle_solve(fp, &f, &u0, &grid, cfg.ref_substeps)?;
            let traj = oracle_solve(&path, &f, &u0, &grid, cfg.row_substeps)?;
            let diff = Trajectory::difference(&traj, &reference)?;
            Ok(solution_norms(sp, &diff).mr2_vh / env)
        })
        .collect();
    let ratios = ratios?;
    let mut sorted: Vec<T> = ratios.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let median_ratio = sorted[sorted.len() / 2];
    let max_ratio = sorted[sorted.len() - 1];
    let pass = max_ratio < median_ratio * real(3.0);
    Ok(UniformityReport { ratios, max_ratio, median_ratio, pass })
}

fn scale_source<T: Scalar>(f: &SourceTerm<T>, s: num_complex::Complex<T>) -> SourceTerm<T> {
    match f {
        SourceTerm::Zero => SourceTerm::Zero,
        SourceTerm::Constant(p) => SourceTerm::Constant(p.map(|x| x * s)),
        SourceTerm::Modulated { profile, coeff } => {
            SourceTerm::Modulated { profile: profile.map(|x| x * s), coeff: coeff.clone() }
        }
        SourceTerm::Table { times, values } => SourceTerm::Table {
            times: times.clone(),
            values: values.iter().map(|v| v.map(|x| x * s)).collect(),
        },
    }
}

/// Weak-convergence budget against strong errors, per ladder row.
#[derive(Clone, Debug)]
pub struct WeakStrongReport<T: Scalar> {
    /// `(m, H¹(0,T;H) norm of u_Λ)`.
    pub h1_norms: Vec<(usize, T)>,
    /// max/min of the H¹ norms along the ladder.
    pub budget_spread: T,
    pub budget_ok: bool,
    /// `(m, MR₂(V,H) error)`.
    pub strong_errors: Vec<(usize, T)>,
    pub final_error: T,
    /// Worst row named when the budget spread fails.
    pub worst_row: Option<usize>,
}

pub fn weak_vs_strong_report<T: Scalar>(rows: &[StudyRow<T>]) -> Result<WeakStrongReport<T>> {
    let good: Vec<&StudyRow<T>> = rows.iter().filter(|r| r.ok()).collect();
    if good.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let h1_norms: Vec<(usize, T)> = good.iter().map(|r| (r.m, r.h1_h)).collect();
    let max = h1_norms.iter().map(|&(_, v)| v).fold(T::zero(), T::max);
    let min = h1_norms
        .iter()
        .map(|&(_, v)| v)
        .fold(T::max_value().unwrap_or_else(T::one), T::min);
    let budget_spread = if min > T::zero() { max / min } else { T::max_value().unwrap_or_else(T::one) };
    let budget_ok = budget_spread < real(3.0);
    let worst_row = if budget_ok {
        None
    } else {
        h1_norms.iter().max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal)).map(|&(m, _)| m)
    };
    let strong_errors: Vec<(usize, T)> = good.iter().map(|r| (r.m, r.err_mr2_vh)).collect();
    let final_error = strong_errors.last().map(|&(_, e)| e).unwrap_or_else(T::zero);
    Ok(WeakStrongReport { h1_norms, budget_spread, budget_ok, strong_errors, final_error, worst_row })
}

/// Render rows as the study CSV: 12 significant digits, a `status` column
/// appended only when some row failed, and `runtime_ms` zeroed when
/// `timing` is false so output stays byte-reproducible.
pub fn rows_to_csv<T: Scalar>(rows: &[StudyRow<T>], timing: bool) -> String {
    let any_failed = rows.iter().any(|r| !r.ok());
    let mut out = String::from(
        "m,mesh,d_lambda,err_mr2_vvp,err_mr2_vh,err_sup_h,err_sup_v,envelope,ratio,runtime_ms",
    );
    if any_failed {
        out.push_str(",status");
    }
    out.push('\n');
    for r in rows {
        let cols = [
            to_f64(r.mesh),
            to_f64(r.d_lambda),
            to_f64(r.err_mr2_vvp),
            to_f64(r.err_mr2_vh),
            to_f64(r.err_sup_h),
            to_f64(r.err_sup_v),
            to_f64(r.envelope),
            to_f64(r.ratio),
            if timing { r.runtime_ms } else { 0.0 },
        ];
        out.push_str(&r.m.to_string());
        for c in cols {
            out.push(',');
            out.push_str(&format_sig(c));
        }
        if any_failed {
            out.push(',');
            match &r.status {
                RowStatus::Ok => out.push_str("ok"),
                // Keep the row a single CSV field.
                RowStatus::Failed(msg) => {
                    out.push_str(&msg.trim().replace(',', ";"))
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Fixed-width scientific notation with 12 significant digits.
pub fn format_sig(x: f64) -> String {
    format!("{x:.11e}")
}
