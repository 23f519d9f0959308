use std::f64::consts::PI;

use conformal_core::geometry::{build_background, min_eigenvalue, GridSpec, Parity, ReducedBackground, H_COEFF};
use conformal_core::harness::{log_log_slope, RunConfig};
use conformal_core::lichnerowicz::{build_subsolution, build_supersolution, lichnerowicz_residual, MomentumDensity};
use conformal_core::momentum::solve_vector;
use conformal_core::seed::{build_seed, coefficients, FourierSpec, SeedConfig};
use proptest::prelude::*;

const M: usize = 64;

fn bg() -> ReducedBackground {
    build_background(GridSpec::new(M, 2.0 * PI).unwrap()).unwrap()
}

fn coeffs(max_len: usize, amp: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-amp..amp, 1..=max_len)
}

fn cos_field(b: &ReducedBackground, mean: f64, c: &[f64]) -> conformal_core::geometry::Field {
    b.field_from_fn(Parity::Even, |t| {
        mean + c.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * t).cos()).sum::<f64>()
    })
}

fn sin_field(b: &ReducedBackground, c: &[f64]) -> conformal_core::geometry::Field {
    b.field_from_fn(Parity::Odd, |t| {
        c.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * t).sin()).sum::<f64>()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derivative_flips_parity_and_squares_to_laplacian(c in coeffs(20, 1.0), mean in -2.0..2.0f64) {
        let b = bg();
        let u = cos_field(&b, mean, &c);
        let du = b.deriv(&u).unwrap();
        prop_assert_eq!(du.parity, Parity::Odd);
        prop_assert!(du.parity_defect() < 1e-12 * (1.0 + u.sup_norm()));
        let ddu = b.deriv(&du).unwrap();
        let lap = b.laplacian(&u).unwrap();
        prop_assert!(ddu.scale(-1.0).sup_dist(&lap) < 1e-10 * (1.0 + lap.sup_norm()));
        prop_assert!(b.integrate(&lap).unwrap().abs() < 1e-10 * (1.0 + lap.sup_norm()));
    }

    #[test]
    fn inverse_laplacian_inverts_on_zero_mean(c in coeffs(25, 1.0)) {
        let b = bg();
        let u = sin_field(&b, &c);
        let back = b.inverse_laplacian(&b.laplacian(&u).unwrap()).unwrap();
        prop_assert!(back.sup_dist(&u) < 1e-12 * (1.0 + u.sup_norm()));
    }

    #[test]
    fn vector_solve_is_linear(c1 in coeffs(10, 1.0), c2 in coeffs(10, 1.0), s in -3.0..3.0f64) {
        let b = bg();
        let r1 = sin_field(&b, &c1);
        let r2 = sin_field(&b, &c2);
        let f1 = solve_vector(&b, &r1, true).unwrap().f;
        let f2 = solve_vector(&b, &r2, true).unwrap().f;
        let f12 = solve_vector(&b, &r1.scale(s).add(&r2), true).unwrap().f;
        prop_assert!(f12.sup_dist(&f1.scale(s).add(&f2)) < 1e-12 * (1.0 + f12.sup_norm()));
        // Solves (4/3) f″ = rhs.
        let back = b.vector_laplacian(&f1).unwrap();
        prop_assert!(back.sup_dist(&r1) < 1e-10 * (1.0 + r1.sup_norm()));
    }

    #[test]
    fn nonzero_mean_source_is_obstructed(c in coeffs(5, 1.0), mean in 0.01..1.0f64) {
        let b = bg();
        let rhs = cos_field(&b, mean, &c);
        prop_assert!(solve_vector(&b, &rhs, true).is_err());
    }

    #[test]
    fn h_form_bounded_below_by_lowest_eigenvalue(psi in coeffs(3, 0.3), u in coeffs(12, 1.0), mean in -1.0..1.0f64) {
        let b = bg();
        let cfg = SeedConfig { psi: FourierSpec::cosines(0.0, psi), ..SeedConfig::benchmark() };
        let seed = build_seed(&b, &cfg).unwrap();
        let c = coefficients(&b, &seed).unwrap();
        let lam = min_eigenvalue(&b.operator_matrix(H_COEFF, &c.rpsi));
        let f = cos_field(&b, mean, &u);
        let l2 = b.integrate(&f.mul(&f)).unwrap();
        prop_assert!(b.h_norm_sq(&c.rpsi, &f).unwrap() >= lam * l2 * (1.0 - 1e-10));
    }

    #[test]
    fn barriers_are_ordered(a0 in 0.001..0.5f64, a in coeffs(4, 0.3)) {
        let b = bg();
        let seed = build_seed(&b, &SeedConfig::benchmark()).unwrap();
        let c = coefficients(&b, &seed).unwrap();
        let a_w = cos_field(&b, 1.0, &a).map(|x| a0 * x.max(0.1));
        let density = MomentumDensity::from_field(&b, a_w).unwrap();
        let sub = build_subsolution(&b, &c, &density).unwrap();
        if let Ok(sup) = build_supersolution(&b, &c, &density) {
            for i in 0..M {
                prop_assert!(sub.phi_sub.samples[i] <= sup.phi_sup.samples[i]);
            }
            let rs = lichnerowicz_residual(&b, &c, &density, &sub.phi_sub, 0.0).unwrap();
            let rp = lichnerowicz_residual(&b, &c, &density, &sup.phi_sup, 0.0).unwrap();
            let scale = 1e-9 * (1.0 + rs.sup_norm().max(rp.sup_norm()));
            prop_assert!(rs.max() <= scale, "sub residual {}", rs.max());
            prop_assert!(rp.min() >= -scale, "sup residual {}", rp.min());
        }
    }

    #[test]
    fn power_law_slope_recovered(p in -2.0..2.0f64, c in 0.1..10.0f64, n in 3usize..10) {
        let pts: Vec<(f64, f64)> = (0..n).map(|i| {
            let x = 10f64.powf(i as f64 * 0.5 - 2.0);
            (x, c * x.powf(p))
        }).collect();
        prop_assert!((log_log_slope(&pts).unwrap() - p).abs() < 1e-10);
    }

    #[test]
    fn config_hash_is_stable_under_reordering(m_exp in 4u32..9, amp in 0.0..0.1f64, seed in any::<u64>()) {
        let m = 1usize << m_exp;
        let a = format!("mode = \"coupled\"\nrng_seed = {seed}\n[grid]\nM = {m}\n[seed]\nsigma_amp = {amp}\ntau = {{ mean = 1.0 }}\npotential = {{ coeffs = [0.1] }}\n");
        let b = format!("rng_seed = {seed}\nmode = \"coupled\"\n[seed]\npotential = {{ coeffs = [0.1] }}\ntau = {{ mean = 1.0 }}\nsigma_amp = {amp}\n[grid]\nM = {m}\n");
        let ca = RunConfig::parse(&a).unwrap();
        let cb = RunConfig::parse(&b).unwrap();
        prop_assert_eq!(ca.hash(), cb.hash());
        let round = RunConfig::parse(&toml::to_string(&ca).unwrap()).unwrap();
        prop_assert_eq!(round, ca);
    }
}
