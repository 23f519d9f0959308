//! The λ-family
//!
//! ```text
//! 8Δφ̃ + ℛφ̃ − λ²𝓑φ̃⁵ − A(f̃)/φ̃⁷ = 0,
//! (4/3)f̃″ = λ(2/3)φ̃⁶τ′ − πψ′,
//! ```
//!
//! which decouples at λ = 0 and, after φ = λ^{1/2}φ̃, f = λ²f̃, solves the
//! original system with σ and π scaled by λ². Followed from λ = 0 by Newton
//! continuation with a zeroth-order predictor.
//!
//! The vector block is made invertible by adding the mean projector P₀ to
//! −(4/3)Δ and projecting its source onto mean-free functions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CoercivityEstimate, Field, ReducedBackground, H_COEFF};
use crate::lichnerowicz::{momentum_density, solve_lichnerowicz_with, LichOptions};
use crate::momentum::{solve_vector, vector_rhs_scaled};
use crate::reconstruction::conformal_residuals;
use crate::seed::{coefficients, LichCoefficients, SeedData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaState {
    pub lambda: f64,
    pub phi_t: Field,
    pub f_t: Field,
    pub newton_iters: usize,
    pub jacobian_min_sv: f64,
    pub residual: f64,
    pub energy_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledSolution {
    pub lambda: f64,
    pub phi: Field,
    pub f: Field,
    pub sigma_amp_scaled: f64,
    pub pi_scaled: Field,
    /// Data scaling λ^{(N+2)/(N−2)} = λ².
    pub epsilon: f64,
    pub residual_lich: f64,
    pub residual_vec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub states: Vec<LambdaState>,
    pub lambda_reached: f64,
    /// λ at which the step fell below the minimum, if it did.
    pub stalled_at: Option<f64>,
}

impl Branch {
    pub fn state_at(&self, lambda: f64) -> Option<&LambdaState> {
        self.states.iter().find(|s| (s.lambda - lambda).abs() < 1e-12)
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationOptions {
    pub newton_tol: f64,
    pub max_newton: usize,
    pub min_step: f64,
    pub sv_iterations: usize,
    pub strict_momentum: bool,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            newton_tol: 1e-10,
            max_newton: 30,
            min_step: 1e-4,
            sv_iterations: 40,
            strict_momentum: true,
        }
    }
}

/// Residual pair (F₁, F₂) of the λ-family at (φ̃, f̃).
pub fn family_residual(
    bg: &ReducedBackground,
    seed: &SeedData,
    coeffs: &LichCoefficients,
    lambda: f64,
    phi: &Field,
    f: &Field,
) -> Result<(Field, Field)> {
    let density = momentum_density(bg, seed, f)?;
    let scaled = coeffs.with_scaled_b(lambda * lambda);
    let f1 = crate::lichnerowicz::lichnerowicz_residual(bg, &scaled, &density, phi, 0.0)?;
    let rhs = vector_rhs_scaled(bg, seed, phi, lambda)?;
    let mean_rhs = rhs.mean();
    let mean_f = f.mean();
    let lap = bg.laplacian(f)?;
    let f2 = Field::new(
        (0..bg.m())
            .map(|i| -(4.0 / 3.0) * lap.samples[i] + mean_f - (rhs.samples[i] - mean_rhs))
            .collect(),
        f.parity,
    );
    Ok((f1, f2))
}

/// Block Jacobian [[J₁₁, J₁₂], [J₂₁, J₂₂]] of [`family_residual`].
pub fn family_jacobian(
    bg: &ReducedBackground,
    seed: &SeedData,
    coeffs: &LichCoefficients,
    lambda: f64,
    phi: &Field,
    f: &Field,
) -> Result<DMatrix<f64>> {
    let m = bg.m();
    let df = bg.deriv(f)?;
    let density = momentum_density(bg, seed, f)?;
    let dtau = bg.deriv(&seed.tau)?;
    let s0 = seed.sigma_amp;
    let lap = bg.laplacian_matrix();
    let d = bg.deriv_matrix();
    let l2 = lambda * lambda;
    let mut j = DMatrix::zeros(2 * m, 2 * m);
    let inv_m = 1.0 / m as f64;
    for r in 0..m {
        let p = phi.samples[r];
        let diag = coeffs.rpsi.samples[r] - 5.0 * l2 * coeffs.btaupsi.samples[r] * p.powi(4)
            + 7.0 * density.a_w.samples[r] / p.powi(8);
        let g12 = -(8.0 * s0 + 16.0 / 3.0 * df.samples[r]) / p.powi(7);
        for c in 0..m {
            j[(r, c)] = H_COEFF * lap[(r, c)];
            j[(r, m + c)] = g12 * d[(r, c)];
            j[(m + r, m + c)] = -(4.0 / 3.0) * lap[(r, c)] + inv_m;
        }
        j[(r, r)] += diag;
    }
    // J₂₁ = −Π₀ diag(4λφ⁵τ′), Π₀ = I − (1/M)11ᵀ.
    let coupling: Vec<f64> = (0..m).map(|i| 4.0 * lambda * phi.samples[i].powi(5) * dtau.samples[i]).collect();
    for c in 0..m {
        let v = coupling[c];
        for r in 0..m {
            j[(m + r, c)] = v * inv_m;
        }
        j[(m + c, c)] -= v;
    }
    Ok(j)
}

/// Smallest singular value by power iteration on (JᵀJ)⁻¹.
fn min_singular_value(j: &DMatrix<f64>, iterations: usize) -> Result<f64> {
    let lu = j.clone().lu();
    let lut = j.transpose().lu();
    let n = j.nrows();
    let mut x = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 97) as f64 / 97.0);
    x /= x.norm();
    let mut mu = 0.0;
    for _ in 0..iterations {
        let y = lut.solve(&x).ok_or(Error::JacobianSingular(0.0))?;
        let z = lu.solve(&y).ok_or(Error::JacobianSingular(0.0))?;
        mu = z.norm();
        if !mu.is_finite() || mu == 0.0 {
            return Err(Error::JacobianSingular(0.0));
        }
        x = z / mu;
    }
    Ok(1.0 / mu.sqrt())
}

fn stack(a: &Field, b: &Field) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.samples.iter().chain(&b.samples).copied())
}

fn sup2(a: &Field, b: &Field) -> f64 {
    a.sup_norm().max(b.sup_norm())
}

/// λ = 0: f̃₀ from the π-source alone, then φ̃₀ from the Lichnerowicz
/// equation with 𝓑 switched off.
pub fn solve_lambda0(
    bg: &ReducedBackground,
    seed: &SeedData,
    estimate: &CoercivityEstimate,
    opts: &ContinuationOptions,
) -> Result<LambdaState> {
    let coeffs = coefficients(bg, seed)?;
    let ones = bg.constant(1.0);
    let rhs = vector_rhs_scaled(bg, seed, &ones, 0.0)?;
    let f = solve_vector(bg, &rhs, opts.strict_momentum)?.f;
    let density = momentum_density(bg, seed, &f)?;
    let b0 = coeffs.with_scaled_b(0.0);
    let lich = solve_lichnerowicz_with(
        bg,
        &b0,
        &density,
        estimate,
        &LichOptions {
            check_stability: false,
            ..LichOptions::default()
        },
    )?;
    let (r1, r2) = family_residual(bg, seed, &coeffs, 0.0, &lich.phi, &f)?;
    let j = family_jacobian(bg, seed, &coeffs, 0.0, &lich.phi, &f)?;
    Ok(LambdaState {
        lambda: 0.0,
        jacobian_min_sv: min_singular_value(&j, opts.sv_iterations)?,
        residual: sup2(&r1, &r2),
        energy_h: lich.energy_h,
        phi_t: lich.phi,
        f_t: f,
        newton_iters: 0,
    })
}

pub fn newton_corrector(
    bg: &ReducedBackground,
    seed: &SeedData,
    lambda: f64,
    guess: &LambdaState,
    opts: &ContinuationOptions,
) -> Result<LambdaState> {
    let coeffs = coefficients(bg, seed)?;
    let m = bg.m();
    if guess.phi_t.min() <= 0.0 {
        return Err(Error::NonpositivePhi(guess.phi_t.min()));
    }
    let mut phi = guess.phi_t.clone();
    let mut f = guess.f_t.clone();
    let (mut r1, mut r2) = family_residual(bg, seed, &coeffs, lambda, &phi, &f)?;
    let mut iters = 0;
    while sup2(&r1, &r2) >= opts.newton_tol {
        if iters >= opts.max_newton {
            return Err(Error::NewtonDiverged {
                lambda,
                residual: sup2(&r1, &r2),
            });
        }
        let j = family_jacobian(bg, seed, &coeffs, lambda, &phi, &f)?;
        let rhs = -stack(&r1, &r2);
        let step = j.lu().solve(&rhs).ok_or(Error::JacobianSingular(0.0))?;
        let merit = rhs.norm();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cphi = Field::new((0..m).map(|i| phi.samples[i] + t * step[i]).collect(), phi.parity);
            let cf = Field::new((0..m).map(|i| f.samples[i] + t * step[m + i]).collect(), f.parity);
            if cphi.min() > 0.0 {
                let (c1, c2) = family_residual(bg, seed, &coeffs, lambda, &cphi, &cf)?;
                if stack(&c1, &c2).norm() < (1.0 - 1e-4 * t) * merit {
                    accepted = Some((cphi, cf, c1, c2));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((cphi, cf, c1, c2)) = accepted else {
            return Err(Error::NewtonDiverged {
                lambda,
                residual: sup2(&r1, &r2),
            });
        };
        phi = cphi;
        f = cf;
        r1 = c1;
        r2 = c2;
        iters += 1;
    }
    let j = family_jacobian(bg, seed, &coeffs, lambda, &phi, &f)?;
    let sv = min_singular_value(&j, opts.sv_iterations)?;
    if sv < 1e-12 {
        return Err(Error::JacobianSingular(sv));
    }
    Ok(LambdaState {
        lambda,
        energy_h: bg.h_norm_sq(&coeffs.rpsi, &phi)?,
        phi_t: phi,
        f_t: f,
        newton_iters: iters,
        jacobian_min_sv: sv,
        residual: sup2(&r1, &r2),
    })
}

/// Uniform λ steps of size λ_max/num_steps, halved on corrector failure.
pub fn continue_family(
    bg: &ReducedBackground,
    seed: &SeedData,
    estimate: &CoercivityEstimate,
    lambda_max: f64,
    num_steps: usize,
    opts: &ContinuationOptions,
) -> Result<Branch> {
    if !(0.0..=1.0).contains(&lambda_max) || num_steps == 0 {
        return Err(Error::Config {
            key: "continuation".into(),
            message: format!("need 0 <= lambda_max <= 1 and num_steps > 0, got {lambda_max}, {num_steps}"),
        });
    }
    let nominal = lambda_max / num_steps as f64;
    let mut states = vec![solve_lambda0(bg, seed, estimate, opts)?];
    let mut lambda = 0.0;
    let mut h = nominal;
    let mut stalled_at = None;
    while lambda < lambda_max {
        let target = (lambda + h).min(lambda_max);
        let prev = states.last().expect("nonempty");
        match newton_corrector(bg, seed, target, prev, opts) {
            Ok(state) => {
                states.push(state);
                lambda = target;
                h = (2.0 * h).min(nominal);
            }
            Err(e) if e.is_regime_failure() || matches!(e, Error::NonpositivePhi(_)) => {
                h *= 0.5;
                if h < opts.min_step {
                    stalled_at = Some(lambda);
                    break;
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Branch {
        lambda_reached: lambda,
        states,
        stalled_at,
    })
}

/// φ = λ^{1/2}φ̃, f = λ²f̃ with σ, π scaled by λ²; checked against the
/// original system with the scaled data.
pub fn rescale(bg: &ReducedBackground, seed: &SeedData, state: &LambdaState) -> Result<RescaledSolution> {
    let l = state.lambda;
    let eps = l * l;
    let phi = state.phi_t.scale(l.sqrt());
    let f = state.f_t.scale(eps);
    let scaled_seed = seed.with_scaled_tt_data(eps);
    if l == 0.0 {
        return Ok(RescaledSolution {
            lambda: l,
            phi,
            f,
            sigma_amp_scaled: 0.0,
            pi_scaled: scaled_seed.pi,
            epsilon: 0.0,
            residual_lich: 0.0,
            residual_vec: 0.0,
        });
    }
    let (lich, vec) = conformal_residuals(bg, &scaled_seed, &phi, &f)?;
    let (rl, rv) = (lich.sup_norm(), vec.sup_norm());
    if rl.max(rv) > 1e-8 {
        return Err(Error::RescaledResidual(rl.max(rv)));
    }
    Ok(RescaledSolution {
        lambda: l,
        phi,
        f,
        sigma_amp_scaled: scaled_seed.sigma_amp,
        pi_scaled: scaled_seed.pi,
        epsilon: eps,
        residual_lich: rl,
        residual_vec: rv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_background, estimate_coercivity, GridSpec, Parity};
    use crate::seed::{build_seed, FourierSpec, SeedConfig};
    use std::f64::consts::PI;

    fn bg(m: usize) -> ReducedBackground {
        build_background(GridSpec::new(m, 2.0 * PI).unwrap()).unwrap()
    }

    fn setup(b: &ReducedBackground, cfg: &SeedConfig) -> (SeedData, CoercivityEstimate) {
        let seed = build_seed(b, cfg).unwrap();
        let c = coefficients(b, &seed).unwrap();
        let est = estimate_coercivity(b, &c.rpsi, &c.btaupsi).unwrap();
        (seed, est)
    }

    #[test]
    fn lambda0_examples() {
        let b = bg(64);
        let mut cfg = SeedConfig::benchmark();
        cfg.pi = FourierSpec::constant(0.0);
        let (seed, est) = setup(&b, &cfg);
        let s = solve_lambda0(&b, &seed, &est, &ContinuationOptions::default()).unwrap();
        assert!(s.f_t.sup_norm() < 1e-15);

        let (seed, est) = setup(&b, &SeedConfig::exact_constant());
        let s = solve_lambda0(&b, &seed, &est, &ContinuationOptions::default()).unwrap();
        assert!(s.phi_t.sup_dist(&b.constant(1.0)) < 1e-10);
        assert!(s.f_t.sup_norm() < 1e-15);
    }

    #[test]
    fn corrector_at_fixed_point_takes_no_steps() {
        let b = bg(64);
        let (seed, est) = setup(&b, &SeedConfig::benchmark());
        let opts = ContinuationOptions::default();
        let s0 = solve_lambda0(&b, &seed, &est, &opts).unwrap();
        let again = newton_corrector(&b, &seed, 0.0, &s0, &opts).unwrap();
        assert_eq!(again.newton_iters, 0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let b = bg(32);
        let (seed, _) = setup(&b, &SeedConfig::benchmark());
        let coeffs = coefficients(&b, &seed).unwrap();
        let phi = b.field_from_fn(Parity::Even, |t| 0.8 + 0.1 * t.cos());
        let f = b.field_from_fn(Parity::Odd, |t| 0.05 * t.sin());
        let lambda = 0.7;
        let j = family_jacobian(&b, &seed, &coeffs, lambda, &phi, &f).unwrap();
        let dphi = b.field_from_fn(Parity::Even, |t| (2.0 * t).cos());
        let df = b.field_from_fn(Parity::Odd, |t| (3.0 * t).sin());
        let h = 1e-6;
        let (p1, p2) = family_residual(&b, &seed, &coeffs, lambda, &phi.add(&dphi.scale(h)), &f.add(&df.scale(h))).unwrap();
        let (m1, m2) = family_residual(&b, &seed, &coeffs, lambda, &phi.sub(&dphi.scale(h)), &f.sub(&df.scale(h))).unwrap();
        let fd = (stack(&p1, &p2) - stack(&m1, &m2)) / (2.0 * h);
        let jv = &j * stack(&dphi, &df);
        assert!((fd - &jv).norm() < 1e-6 * jv.norm());
    }

    #[test]
    fn rescale_identity_at_one() {
        let b = bg(64);
        let (seed, est) = setup(&b, &SeedConfig::exact_constant());
        let branch = continue_family(&b, &seed, &est, 1.0, 4, &ContinuationOptions::default()).unwrap();
        assert_eq!(branch.lambda_reached, 1.0);
        // 𝓑 ≡ 0 and τ constant: the family is constant.
        for s in &branch.states {
            assert!(s.phi_t.sup_dist(&b.constant(1.0)) < 1e-10);
        }
        let r = rescale(&b, &seed, branch.states.last().unwrap()).unwrap();
        assert!(r.phi.sup_dist(&b.constant(1.0)) < 1e-10);
        assert_eq!(r.epsilon, 1.0);
        let quarter = rescale(&b, &seed, branch.state_at(0.25).unwrap()).unwrap();
        assert!(quarter.phi.sup_dist(&b.constant(0.5)) < 1e-10);
        assert!((quarter.sigma_amp_scaled - seed.sigma_amp / 16.0).abs() < 1e-16);
    }
}
