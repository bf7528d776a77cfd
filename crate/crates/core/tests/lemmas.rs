//! Quantitative checks of the a-priori estimates the solvers rely on.

use std::sync::Arc;

use evoform::affine::build_affine;
use evoform::forms::{FormPath, TimeCoeff};
use evoform::hilbert::SpacePair;
use evoform::quadrature::gauss_on_interval;
use evoform::semigroup::expm;
use evoform::solver::{oracle_solve, solution_norms, source_norms, SourceTerm, TimeGrid};
use evoform::{CMatrix, CVector, Cplx};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn c(re: f64, im: f64) -> Cplx {
    Cplx::new(re, im)
}

fn heat_problem(n: usize) -> (Arc<SpacePair<f64>>, FormPath<f64>) {
    let gv = CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            let k = (i + 1) as f64;
            c(1.0 + k * k, 0.0)
        } else {
            c(0.0, 0.0)
        }
    });
    let space = Arc::new(SpacePair::new(CMatrix::identity(n, n), gv).unwrap());
    let fp = FormPath::spectral_heat_1d(
        space.clone(),
        1.0,
        TimeCoeff::Power { offset: c(1.0, 0.0), amplitude: c(1.0, 0.0), exponent: 0.75 },
        TimeCoeff::Const(c(1.0, 0.0)),
    );
    (space, fp)
}

fn random_datum(rng: &mut ChaCha20Rng, n: usize) -> (SourceTerm<f64>, CVector) {
    let mut draw = |_: usize| c(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0);
    let f = SourceTerm::Constant(CVector::from_fn(n, |i, _| draw(i)));
    let u0 = CVector::from_fn(n, |i, _| draw(i));
    (f, u0)
}

/// A-priori stability: the solution's MR2(V,V') norm is controlled by the
/// V'-norm of the source plus the H-norm of the initial datum, with a
/// refinement-stable constant over random normalized data.
#[test]
fn lions_a_priori_estimate_is_refinement_stable() {
    let (space, fp) = heat_problem(4);
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let mut worst = [0.0f64; 2];
    for (pass, cells) in [(0usize, 32usize), (1, 64)] {
        let grid = TimeGrid::uniform(1.0, cells, 4).unwrap();
        let mut rng_local = ChaCha20Rng::seed_from_u64(7);
        std::mem::swap(&mut rng, &mut rng_local);
        for _ in 0..100 {
            let (f, u0) = random_datum(&mut rng, 4);
            let (_, f_vp) = source_norms(&space, &f, &grid);
            let datum = f_vp + space.h_norm(&u0);
            let traj = oracle_solve(&fp, &f, &u0, &grid, 2).unwrap();
            let ratio = solution_norms(&space, &traj).mr2_vvp / datum;
            worst[pass] = worst[pass].max(ratio);
        }
    }
    assert!(worst[0].is_finite() && worst[1].is_finite());
    let drift = worst[1] / worst[0];
    assert!((0.8..1.25).contains(&drift), "constants {worst:?} drift {drift}");
}

/// The frozen-datum term satisfies ‖A_n u_{n,1}‖_{L²(0,T;H)} <= c ‖u0‖_V
/// with c uniform over the affine family — the linear (unsquared) form of
/// the bound, confirmed by exact degree-one homogeneity in u0.
#[test]
fn frozen_datum_term_bound_is_linear_in_u0() {
    let (space, fp) = heat_problem(4);
    let u0 = CVector::from_fn(4, |i, _| c(1.0 / (i + 1) as f64, 0.1));
    let u0_v = space.v_norm(&u0);
    let mut ratios = Vec::new();
    for m in [4usize, 8, 16, 32] {
        let path = build_affine(&fp, m, 8).unwrap().as_form_path();
        // L²(0,T;H) of t -> B_n(t) e^{-t B_n(t)} u0 by composite Gauss.
        let mut sq = 0.0;
        for j in 0..32 {
            let a = j as f64 / 32.0;
            for (t, w) in gauss_on_interval(4, a, a + 1.0 / 32.0) {
                let b = space.h_realization(&path.eval(t));
                let u1 = expm(&b.map(|x| x * c(-t, 0.0))) * &u0;
                sq += w * space.h_norm(&(&b * u1)).powi(2);
            }
        }
        ratios.push(sq.sqrt() / u0_v);
    }
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(max.is_finite() && max / min < 2.0, "family ratios {ratios:?}");

    // Degree-one homogeneity: scaling u0 by 4 scales the norm by 4, which is
    // what the linear (unsquared) bound predicts.
    let m = 8;
    let path = build_affine(&fp, m, 8).unwrap().as_form_path();
    let norm_of = |u0: &CVector| -> f64 {
        let mut sq = 0.0;
        for j in 0..32 {
            let a = j as f64 / 32.0;
            for (t, w) in gauss_on_interval(4, a, a + 1.0 / 32.0) {
                let b = space.h_realization(&path.eval(t));
                let u1 = expm(&b.map(|x| x * c(-t, 0.0))) * u0;
                sq += w * space.h_norm(&(&b * u1)).powi(2);
            }
        }
        sq.sqrt()
    };
    let base = norm_of(&u0);
    let scaled = norm_of(&u0.map(|x| x * c(4.0, 0.0)));
    assert!((scaled / base - 4.0).abs() < 1e-10);
}

/// The derivative budget ‖u_n‖_{H¹(0,T;H)} <= c (‖u0‖_V + ‖f‖_{L²(0,T;H)})
/// holds with a bounded constant over random data.
#[test]
fn derivative_budget_over_random_data() {
    let (space, fp) = heat_problem(4);
    let grid = TimeGrid::uniform(1.0, 48, 4).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (f, u0) = random_datum(&mut rng, 4);
        let (f_h, _) = source_norms(&space, &f, &grid);
        let datum = space.v_norm(&u0) + f_h;
        let traj = oracle_solve(&fp, &f, &u0, &grid, 2).unwrap();
        worst = worst.max(solution_norms(&space, &traj).h1_h / datum);
    }
    assert!(worst.is_finite() && worst < 50.0, "budget constant {worst}");
}
