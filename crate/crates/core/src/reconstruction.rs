//! Physical initial data from (φ, W, seed) and the original constraints.
//!
//! ĝ = φ⁴(dθ² + ĝ_{S²}), K̂ = (τ/3)ĝ + φ⁻²(σ + 𝕃W), ψ̂ = ψ, π̂ = φ⁻⁶π.
//!
//! The physical residuals are evaluated with curvature formulas for the
//! doubly warped metric a(θ)dθ² + b(θ)ĝ_{S²}, not with the conformal
//! transformation law, so they check the conformal solver independently.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Field, Parity, ReducedBackground};
use crate::lichnerowicz::{lichnerowicz_residual, momentum_density};
use crate::momentum::vector_rhs_scaled;
use crate::seed::{coefficients, Potential, SeedData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalData {
    /// ĝ_θθ.
    pub ghat_theta: Field,
    /// Coefficient of ĝ_{S²} in ĝ.
    pub ghat_sphere: Field,
    /// K̂_θθ.
    pub k_theta: Field,
    /// Coefficient of ĝ_{S²} in K̂.
    pub k_sphere: Field,
    pub psi_hat: Field,
    pub pi_hat: Field,
    /// sup |tr_ĝ K̂ − τ|.
    pub trace_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub hamiltonian_sup: f64,
    pub momentum_sup: f64,
    pub conformal_lich_sup: f64,
    pub conformal_vec_sup: f64,
    pub obstruction: f64,
}

/// Scalar curvature of a dθ² + b ĝ_{S²} in terms of θ-derivatives.
///
/// With r = √b and arclength derivative ˙ = a^{-1/2} d/dθ:
/// Scal = −4 r̈/r + 2(1 − ṙ²)/r².
pub fn warped_scalar_curvature(a: f64, da: f64, b: f64, db: f64, ddb: f64) -> f64 {
    let r = b.sqrt();
    let r_t = db / (2.0 * r);
    let r_tt = ddb / (2.0 * r) - db * db / (4.0 * b * r);
    let r_dot = r_t / a.sqrt();
    let r_ddot = r_tt / a - r_t * da / (2.0 * a * a);
    -4.0 * r_ddot / r + 2.0 * (1.0 - r_dot * r_dot) / (r * r)
}

/// θ-component of div K − d tr K for K = K_θ dθ² + K_s ĝ_{S²} on
/// a dθ² + b ĝ_{S²}, in terms of the mixed components k_θ = K_θ/a,
/// k_s = K_s/b and the coordinate derivative of k_s.
pub fn warped_div_minus_dtrace(b: f64, db: f64, k_theta: f64, k_s: f64, dk_s: f64) -> f64 {
    db / b * (k_theta - k_s) - 2.0 * dk_s
}

pub fn reconstruct(bg: &ReducedBackground, seed: &SeedData, phi: &Field, f: &Field) -> Result<PhysicalData> {
    let min = phi.min();
    if min <= 0.0 {
        return Err(Error::NonpositivePhi(min));
    }
    let df = bg.deriv(f)?;
    let s0 = seed.sigma_amp;
    let m = bg.m();
    let mut k_theta = Vec::with_capacity(m);
    let mut k_sphere = Vec::with_capacity(m);
    let mut trace_defect: f64 = 0.0;
    for i in 0..m {
        let p = phi.samples[i];
        let tau = seed.tau.samples[i];
        let p4 = p.powi(4);
        let kt = tau / 3.0 * p4 + (2.0 * s0 + 4.0 / 3.0 * df.samples[i]) / (p * p);
        let ks = tau / 3.0 * p4 - (s0 + 2.0 / 3.0 * df.samples[i]) / (p * p);
        trace_defect = trace_defect.max(((kt + 2.0 * ks) / p4 - tau).abs());
        k_theta.push(kt);
        k_sphere.push(ks);
    }
    let g = phi.map(|p| p.powi(4));
    Ok(PhysicalData {
        ghat_theta: g.clone(),
        ghat_sphere: g,
        k_theta: Field::new(k_theta, Parity::Even),
        k_sphere: Field::new(k_sphere, Parity::Even),
        psi_hat: seed.psi.clone(),
        pi_hat: phi.zip_map(&seed.pi, seed.pi.parity, |p, pi| pi / p.powi(6)),
        trace_defect,
    })
}

/// Pointwise Hamiltonian and momentum residuals
///
/// ```text
/// Scal + (tr K)² − |K|² − π̂² − |dψ̂|² − 2V(ψ̂),
/// (div K − d tr K + π̂ dψ̂)_θ.
/// ```
pub fn physical_residuals(bg: &ReducedBackground, data: &PhysicalData, potential: &Potential) -> Result<(Field, Field)> {
    let a = &data.ghat_theta;
    let b = &data.ghat_sphere;
    let da = bg.deriv(a)?;
    let db = bg.deriv(b)?;
    let ddb = bg.deriv(&db)?;
    let dpsi = bg.deriv(&data.psi_hat)?;
    let k_s = data.k_sphere.zip_map(b, Parity::Even, |k, b| k / b);
    let dk_s = bg.deriv(&k_s)?;
    let m = bg.m();
    let mut ham = Vec::with_capacity(m);
    let mut mom = Vec::with_capacity(m);
    for i in 0..m {
        let (ai, bi) = (a.samples[i], b.samples[i]);
        let kt = data.k_theta.samples[i] / ai;
        let ks = k_s.samples[i];
        let scal = warped_scalar_curvature(ai, da.samples[i], bi, db.samples[i], ddb.samples[i]);
        let tr = kt + 2.0 * ks;
        let norm_sq = kt * kt + 2.0 * ks * ks;
        let pi = data.pi_hat.samples[i];
        let dpsi_sq = dpsi.samples[i] * dpsi.samples[i] / ai;
        ham.push(scal + tr * tr - norm_sq - pi * pi - dpsi_sq - 2.0 * potential.eval(data.psi_hat.samples[i]));
        mom.push(warped_div_minus_dtrace(bi, db.samples[i], kt, ks, dk_s.samples[i]) + pi * dpsi.samples[i]);
    }
    Ok((Field::new(ham, Parity::Even), Field::new(mom, Parity::Odd)))
}

/// Pointwise residuals of the reduced Lichnerowicz and vector equations.
pub fn conformal_residuals(bg: &ReducedBackground, seed: &SeedData, phi: &Field, f: &Field) -> Result<(Field, Field)> {
    let min = phi.min();
    if min <= 0.0 {
        return Err(Error::NonpositivePhi(min));
    }
    let coeffs = coefficients(bg, seed)?;
    let density = momentum_density(bg, seed, f)?;
    let lich = lichnerowicz_residual(bg, &coeffs, &density, phi, 0.0)?;
    let rhs = vector_rhs_scaled(bg, seed, phi, 1.0)?;
    let vec = bg.vector_laplacian(f)?.sub(&rhs);
    Ok((lich, vec))
}

pub fn residual_report(bg: &ReducedBackground, seed: &SeedData, phi: &Field, f: &Field) -> Result<ResidualReport> {
    let (lich, vec) = conformal_residuals(bg, seed, phi, f)?;
    let data = reconstruct(bg, seed, phi, f)?;
    let (ham, mom) = physical_residuals(bg, &data, &seed.potential)?;
    let rhs = vector_rhs_scaled(bg, seed, phi, 1.0)?;
    Ok(ResidualReport {
        hamiltonian_sup: ham.sup_norm(),
        momentum_sup: mom.sup_norm(),
        conformal_lich_sup: lich.sup_norm(),
        conformal_vec_sup: vec.sup_norm(),
        obstruction: rhs.mean().abs() * bg.volume,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_background, GridSpec};
    use crate::seed::{build_seed, SeedConfig};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn bg(m: usize) -> ReducedBackground {
        build_background(GridSpec::new(m, 2.0 * PI).unwrap()).unwrap()
    }

    #[test]
    fn warped_formulas_on_product() {
        // Unit product metric: Scal = 2 (the sphere), no momentum source.
        assert_relative_eq!(warped_scalar_curvature(1.0, 0.0, 1.0, 0.0, 0.0), 2.0);
        // Round S³ patch: dθ² + sin²θ ĝ_{S²} has Scal = 6.
        let t: f64 = 0.7;
        let b = t.sin().powi(2);
        let db = 2.0 * t.sin() * t.cos();
        let ddb = 2.0 * (t.cos().powi(2) - t.sin().powi(2));
        assert_relative_eq!(warped_scalar_curvature(1.0, 0.0, b, db, ddb), 6.0, max_relative = 1e-13);
        // Constant rescaling c(dθ² + ĝ_{S²}) scales Scal by 1/c.
        assert_relative_eq!(warped_scalar_curvature(4.0, 0.0, 4.0, 0.0, 0.0), 0.5);
    }

    #[test]
    fn umbilic_and_pure_tt_examples() {
        let b = bg(32);
        let mut seed = build_seed(&b, &SeedConfig::exact_constant()).unwrap();
        seed.sigma_amp = 0.0;
        seed.tau = b.constant(1.2);
        let one = b.constant(1.0);
        let zero = Field::new(vec![0.0; 32], Parity::Odd);
        let d = reconstruct(&b, &seed, &one, &zero).unwrap();
        assert!(d.k_theta.sup_dist(&b.constant(0.4)) < 1e-15);
        assert!(d.k_sphere.sup_dist(&b.constant(0.4)) < 1e-15);

        seed.sigma_amp = 1.0;
        seed.tau = b.constant(0.0);
        let d = reconstruct(&b, &seed, &one, &zero).unwrap();
        assert!(d.k_theta.sup_dist(&b.constant(2.0)) < 1e-15);
        assert!(d.k_sphere.sup_dist(&b.constant(-1.0)) < 1e-15);
        assert!(d.trace_defect < 1e-15);
    }

    #[test]
    fn umbilic_hamiltonian_by_hand() {
        let b = bg(32);
        let mut seed = build_seed(&b, &SeedConfig::exact_constant()).unwrap();
        let c = 0.9;
        seed.sigma_amp = 0.0;
        seed.tau = b.constant(c);
        seed.pi = b.constant(0.3);
        let zero = Field::new(vec![0.0; 32], Parity::Odd);
        let d = reconstruct(&b, &seed, &b.constant(1.0), &zero).unwrap();
        let (ham, mom) = physical_residuals(&b, &d, &seed.potential).unwrap();
        let expected = 2.0 + (2.0 / 3.0) * c * c - 2.0 * seed.potential.eval(0.0) - 0.09;
        assert!(ham.sup_dist(&b.constant(expected)) < 1e-13);
        assert!(mom.sup_norm() < 1e-14);
    }

    #[test]
    fn exact_constant_state_has_zero_residuals() {
        let b = bg(64);
        let seed = build_seed(&b, &SeedConfig::exact_constant()).unwrap();
        let zero = Field::new(vec![0.0; 64], Parity::Odd);
        let r = residual_report(&b, &seed, &b.constant(1.0), &zero).unwrap();
        assert!(r.conformal_lich_sup < 1e-11, "{r:?}");
        assert!(r.conformal_vec_sup < 1e-11);
        assert!(r.hamiltonian_sup < 1e-9);
        assert!(r.momentum_sup < 1e-9);
    }

    #[test]
    fn non_solution_has_large_residuals() {
        let b = bg(64);
        let seed = build_seed(&b, &SeedConfig::benchmark()).unwrap();
        let phi = b.field_from_fn(Parity::Even, |t| 1.0 + 0.3 * t.cos());
        let f = b.field_from_fn(Parity::Odd, |t| 0.2 * t.sin());
        let r = residual_report(&b, &seed, &phi, &f).unwrap();
        assert!(r.hamiltonian_sup > 1e-3 && r.momentum_sup > 1e-3);
    }

    #[test]
    fn perturbations_move_the_right_residual() {
        let b = bg(64);
        let seed = build_seed(&b, &SeedConfig::exact_constant()).unwrap();
        let zero = Field::new(vec![0.0; 64], Parity::Odd);
        let bump = b.field_from_fn(Parity::Even, |t| 1.0 + 1e-3 * t.cos());
        let (lich, vec) = conformal_residuals(&b, &seed, &bump, &zero).unwrap();
        assert!(lich.sup_norm() > 1e-4);
        assert!(vec.sup_norm() < 1e-14);
        let f = b.field_from_fn(Parity::Odd, |t| 1e-3 * (2.0 * t).sin());
        let (_, vec) = conformal_residuals(&b, &seed, &b.constant(1.0), &f).unwrap();
        assert!(vec.sup_norm() > 1e-4);
    }
}
