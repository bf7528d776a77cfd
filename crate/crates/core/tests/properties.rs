//! Property tests for the structural invariants.

use std::sync::Arc;

use evoform::affine::omega_lambda;
use evoform::forms::{FormPath, ModulusProfile};
use evoform::hilbert::SpacePair;
use evoform::solver::{oracle_solve, SourceTerm, TimeGrid};
use evoform::{CMatrix, CVector, Cplx};
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Cplx {
    Cplx::new(re, im)
}

fn diag_space(eigs: &[f64]) -> Arc<SpacePair<f64>> {
    let n = eigs.len();
    let gv = CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            c(eigs[i], 0.0)
        } else {
            c(0.0, 0.0)
        }
    });
    Arc::new(SpacePair::new(CMatrix::identity(n, n), gv).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interpolation_inequality(
        s1 in 0.2f64..5.0,
        s2 in 0.2f64..5.0,
        s3 in 0.2f64..5.0,
        re in proptest::collection::vec(-2.0f64..2.0, 3),
        im in proptest::collection::vec(-2.0f64..2.0, 3),
        gamma in 0.0f64..1.0,
    ) {
        let sp = diag_space(&[s1, s2, s3]);
        let u = CVector::from_fn(3, |i, _| c(re[i], im[i]));
        let h = sp.h_norm(&u);
        let v = sp.v_norm(&u);
        let vg = sp.scale_norm(&u, gamma).unwrap();
        prop_assert!(vg <= h.powf(1.0 - gamma) * v.powf(gamma) * (1.0 + 1e-10));
    }

    #[test]
    fn duality_bound(
        entries in proptest::collection::vec(-3.0f64..3.0, 8),
        ure in proptest::collection::vec(-2.0f64..2.0, 2),
        vre in proptest::collection::vec(-2.0f64..2.0, 2),
        gamma in 0.0f64..1.0,
    ) {
        let sp = diag_space(&[1.0, 4.0]);
        let a = CMatrix::from_fn(2, 2, |i, j| c(entries[2*i + j], entries[4 + 2*i + j]));
        let norm = sp.form_operator_norm(&a, -gamma).unwrap();
        let u = CVector::from_fn(2, |i, _| c(ure[i], -ure[1 - i]));
        let v = CVector::from_fn(2, |i, _| c(vre[i], vre[1 - i]));
        let lhs = (v.adjoint() * &a * &u)[(0, 0)].norm();
        let rhs = norm * sp.v_norm(&u) * sp.scale_norm(&v, gamma).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-10) + 1e-12);
    }

    #[test]
    fn semigroup_law(
        s in 0.01f64..2.0,
        r in 0.01f64..2.0,
        d1 in 0.5f64..4.0,
        d2 in 0.5f64..4.0,
        off in -1.0f64..1.0,
    ) {
        let sp = SpacePair::<f64>::identity(2);
        // Accretive-ish test matrix with an off-diagonal coupling.
        let a = CMatrix::from_fn(2, 2, |i, j| {
            if i == j { c([d1, d2][i], 0.0) } else { c(off, 0.3 * off) }
        });
        let whole = evoform::semigroup::semigroup_value(&sp, &a, s + r);
        let split = evoform::semigroup::semigroup_value(&sp, &a, s)
            * evoform::semigroup::semigroup_value(&sp, &a, r);
        prop_assert!((&whole - split).norm() <= 1e-12 * whole.norm().max(1e-30));
    }

    #[test]
    fn resolvent_identity(
        l1re in -5.0f64..-0.5,
        l1im in -2.0f64..2.0,
        l2re in -5.0f64..-0.5,
        l2im in -2.0f64..2.0,
        d in 0.5f64..3.0,
    ) {
        let sp = SpacePair::<f64>::identity(2);
        let a = CMatrix::from_fn(2, 2, |i, j| {
            if i == j { c(d + i as f64, 0.0) } else { c(0.4, -0.2) }
        });
        let l1 = c(l1re, l1im);
        let l2 = c(l2re, l2im);
        prop_assume!((l1 - l2).norm() > 1e-6);
        let r1 = evoform::semigroup::resolvent(&sp, &a, l1, None).unwrap();
        let r2 = evoform::semigroup::resolvent(&sp, &a, l2, None).unwrap();
        let lhs = &r1 - &r2;
        let rhs = (&r1 * &r2).map(|x| x * (l2 - l1));
        prop_assert!((lhs - rhs).norm() <= 1e-11 * (r1.norm() * r2.norm()).max(1.0));
    }

    #[test]
    fn oracle_scales_linearly(
        scale_re in -3.0f64..3.0,
        scale_im in -3.0f64..3.0,
        rate in 0.3f64..2.0,
    ) {
        prop_assume!(scale_re.abs() + scale_im.abs() > 1e-3);
        let sp = Arc::new(SpacePair::<f64>::identity(1));
        let fp = FormPath::scalar_poly(sp, 1.0, vec![c(rate, 0.0), c(0.5, 0.0)]);
        let grid = TimeGrid::uniform(1.0, 8, 4).unwrap();
        let one = CVector::from_vec(vec![c(1.0, 0.0)]);
        let f = SourceTerm::Constant(one.clone());
        let base = oracle_solve(&fp, &f, &one, &grid, 1).unwrap();
        let k = c(scale_re, scale_im);
        let scaled = oracle_solve(
            &fp,
            &SourceTerm::Constant(one.map(|x| x * k)),
            &one.map(|x| x * k),
            &grid,
            1,
        )
        .unwrap();
        for i in 0..base.values.len() {
            let expect = base.values[i].map(|x| x * k);
            let diff = (&scaled.values[i] - expect).norm();
            prop_assert!(diff <= 1e-12 * scaled.values[i].norm().max(1e-30));
        }
    }

    #[test]
    fn omega_lambda_monotone_and_continuous(
        coeff in 0.1f64..3.0,
        eta in 0.3f64..1.0,
        inv_mesh in 2usize..40,
    ) {
        let profile = ModulusProfile::<f64>::power(0.5, 1.0, coeff, eta);
        let mesh = 1.0 / inv_mesh as f64;
        // Continuity at the breakpoint t = 2 mesh.
        let left = omega_lambda(&profile, mesh, 2.0 * mesh).unwrap();
        let right = 2.0 * profile.eval(4.0 * mesh);
        prop_assert!((left - right).abs() <= 1e-14 * right.max(1e-30));
        // Monotone in t across the whole range.
        let mut prev = 0.0;
        for k in 0..=50 {
            let t = k as f64 / 50.0;
            let v = omega_lambda(&profile, mesh, t).unwrap();
            prop_assert!(v + 1e-14 >= prev);
            prev = v;
        }
    }

    #[test]
    fn measured_modulus_is_nondecreasing(
        a in 0.2f64..2.0,
        b in -1.5f64..1.5,
        cq in -1.0f64..1.0,
    ) {
        let sp = Arc::new(SpacePair::<f64>::identity(1));
        let fp = FormPath::scalar_poly(sp, 1.0, vec![c(a, 0.0), c(b, 0.1), c(cq, 0.0)]);
        let grid = evoform::forms::default_delta_grid(1.0, 8);
        let profile = evoform::forms::measure_modulus(&fp, 0.0, &grid).unwrap();
        for w in profile.table.windows(2) {
            prop_assert!(w[1].1 + 1e-15 >= w[0].1);
        }
    }
}
