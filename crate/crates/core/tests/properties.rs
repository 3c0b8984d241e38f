//! Randomized structural properties.

mod common;

use std::f64::consts::PI;

use common::{random_scalar, rng};
use ocmg::grid::{apply_laplacian, apply_mass};
use ocmg::lfa::{
    cjr_optimal, lambda2_bsr, omega_0, optimize_sampled, psi, Frequency, LfaParams, Scheme,
};
use ocmg::multigrid::{prolong, restrict};
use ocmg::ssn::{dphi_scalar, phi_scalar, ControlParams};
use ocmg::GridSpec;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_and_mass_are_symmetric_positive(n in 3usize..20, seed in any::<u64>()) {
        let grid = GridSpec::new(n).unwrap();
        let mut r = rng(seed);
        let u = random_scalar(grid, &mut r);
        let v = random_scalar(grid, &mut r);
        for apply in [apply_laplacian, apply_mass] {
            let au = apply(&u, grid).unwrap();
            let av = apply(&v, grid).unwrap();
            let scale = au.norm2() * v.norm2();
            prop_assert!((au.dot(&v) - av.dot(&u)).abs() <= 1e-12 * scale);
            prop_assert!(au.dot(&u) > 0.0);
        }
    }

    #[test]
    fn restriction_is_scaled_adjoint_of_prolongation(k in 2usize..6, q in 2usize..5, seed in any::<u64>()) {
        let fine = GridSpec::new(k * q).unwrap();
        let coarse = fine.coarsen(q).unwrap();
        let mut r = rng(seed);
        let uf = random_scalar(fine, &mut r);
        let uc = random_scalar(coarse, &mut r);
        let lhs = restrict(&uf, q).unwrap().dot(&uc);
        let rhs = uf.dot(&prolong(&uc, q, fine).unwrap()) / (q * q) as f64;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn phi_is_monotone_and_bounded(
        a in -100.0f64..100.0,
        b in -100.0f64..100.0,
        alpha in 1e-6f64..1e-1,
        beta in 0.0f64..1.0,
    ) {
        let cp = ControlParams::new(alpha, beta, -30.0, 30.0).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(phi_scalar(lo, &cp) <= phi_scalar(hi, &cp));
        let u = phi_scalar(a, &cp);
        prop_assert!((-30.0..=30.0).contains(&u));
        if a.abs() <= beta {
            prop_assert_eq!(u, 0.0);
        }
    }

    #[test]
    fn dphi_matches_finite_differences(p in -10.0f64..10.0, alpha in 1e-3f64..1.0, beta in 0.0f64..1.0) {
        let cp = ControlParams::new(alpha, beta, -3.0, 3.0).unwrap();
        let eps = 1e-7;
        let kinks = [beta, -beta, beta + 3.0 * alpha, -beta - 3.0 * alpha];
        prop_assume!(kinks.iter().all(|k| (p - k).abs() > 1e-4));
        let fd = (phi_scalar(p + eps, &cp) - phi_scalar(p - eps, &cp)) / (2.0 * eps);
        let exact = if dphi_scalar(p, &cp) { 1.0 / alpha } else { 0.0 };
        prop_assert!((fd - exact).abs() <= 1e-5 * (1.0 + exact));
    }

    #[test]
    fn bsr_eigenvalue_lies_in_mass_range(t1 in -PI / 2.0..1.5 * PI, t2 in -PI / 2.0..1.5 * PI, exp in 1i32..12) {
        let theta = Frequency::new(t1, t2).unwrap();
        prop_assume!(!theta.is_low(2));
        let params = LfaParams::new(2, 10f64.powi(-exp), 1.0 / 64.0).unwrap();
        let l2 = lambda2_bsr(theta, &params);
        prop_assert!(l2 > 0.0 && l2 <= 16.0 / 9.0 + 1e-12);
    }

    #[test]
    fn cjr_closed_form_is_optimal(exp in 2i32..14, q in 2usize..5) {
        let params = LfaParams::new(q, 10f64.powi(-exp), 1.0 / 64.0).unwrap().with_samples(64).unwrap();
        let closed = cjr_optimal(&params);
        let sampled = optimize_sampled(Scheme::Cjr, &params).unwrap();
        prop_assert!((closed.mu - sampled.mu).abs() <= 2e-3);
        // psi is the square of the smoothing factor on the omega_0 branch
        let g = params.gamma();
        prop_assert!(psi(omega_0(g), g) >= 0.0);
    }
}
