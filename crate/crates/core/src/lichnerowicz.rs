//! The Lichnerowicz equation
//!
//! ```text
//! 8Δφ + ℛ_ψ φ = 𝓑 φ⁵ + A_W / φ⁷,    A_W = |σ + 𝕃W|² + π²,
//! ```
//!
//! for a fixed W, solved as the stable minimizer of
//!
//! ```text
//! I_W(φ) = ½‖φ‖²_h − ∫ 𝓑φ⁶/6 + ∫ A_W/(6φ⁶).
//! ```
//!
//! The solver follows the regularized route: Newton on the Euler–Lagrange
//! equation of I^ε_W (barrier A_W/(φ+ε)⁷) for a halving schedule of ε down to
//! ε = 0, with every iterate clamped between a certified subsolution and a
//! supersolution and kept inside the ball ‖φ‖_h ≤ R0 on which I_W is
//! strictly convex.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, CoercivityEstimate, Field, Parity, ReducedBackground, H_COEFF, N_CRIT};
use crate::seed::{LichCoefficients, SeedData};

/// A_W = |σ + 𝕃W|² + π² pointwise, and its integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumDensity {
    pub a_w: Field,
    pub integral_a: f64,
}

impl MomentumDensity {
    pub fn from_field(bg: &ReducedBackground, a_w: Field) -> Result<Self> {
        let integral_a = bg.integrate(&a_w)?;
        Ok(MomentumDensity { a_w, integral_a })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        MomentumDensity {
            a_w: self.a_w.scale(factor),
            integral_a: self.integral_a * factor,
        }
    }
}

/// A_W for W = f dθ:
/// 6s₀² + 8s₀f′ + (8/3)(f′)² + π² = (8/3)(f′ + 3s₀/2)² + π².
pub fn momentum_density(bg: &ReducedBackground, seed: &SeedData, f: &Field) -> Result<MomentumDensity> {
    let df = bg.deriv(f)?;
    let s0 = seed.sigma_amp;
    let a_w = df.zip_map(&seed.pi, Parity::Even, |d, p| {
        let shifted = d + 1.5 * s0;
        8.0 / 3.0 * shifted * shifted + p * p
    });
    MomentumDensity::from_field(bg, a_w)
}

/// The conformal Laplacian 8Δ + ℛ_ψ with a cached Cholesky factor.
pub struct ConformalOperator {
    pub matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl ConformalOperator {
    pub fn new(bg: &ReducedBackground, rpsi: &Field) -> Result<Self> {
        let matrix = bg.operator_matrix(H_COEFF, rpsi);
        let chol = Cholesky::new(matrix.clone()).ok_or_else(|| Error::NotCoercive {
            lambda_min: geometry::min_eigenvalue(&matrix),
        })?;
        Ok(ConformalOperator { matrix, chol })
    }

    pub fn solve(&self, rhs: &Field) -> Field {
        let x = self.chol.solve(&rhs.to_dvector());
        Field::new(x.iter().copied().collect(), rhs.parity)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Solve 8Δu + ℛ_ψ u = F and check that u is positive.
pub fn solve_linear_conformal(bg: &ReducedBackground, rpsi: &Field, rhs: &Field) -> Result<Field> {
    let u = ConformalOperator::new(bg, rpsi)?.solve(rhs);
    let min = u.min();
    if min <= 0.0 {
        return Err(Error::PositivityViolated { min });
    }
    Ok(u)
}

/// Pointwise 8Δφ + ℛφ − 𝓑|φ|⁴φ − A/(φ+ε)⁷.
pub fn lichnerowicz_residual(
    bg: &ReducedBackground,
    coeffs: &LichCoefficients,
    density: &MomentumDensity,
    phi: &Field,
    eps: f64,
) -> Result<Field> {
    let lap = bg.laplacian(phi)?;
    let m = bg.m();
    let samples = (0..m)
        .map(|i| {
            let p = phi.samples[i];
            H_COEFF * lap.samples[i] + coeffs.rpsi.samples[i] * p
                - coeffs.btaupsi.samples[i] * p.abs().powi(4) * p
                - density.a_w.samples[i] / (p + eps).powi(7)
        })
        .collect();
    Ok(Field::new(samples, phi.parity))
}

/// Largest pointwise magnitude among the terms of the residual; the scale
/// against which round-off in a sign check is measured.
fn residual_scale(bg: &ReducedBackground, coeffs: &LichCoefficients, density: &MomentumDensity, phi: &Field, eps: f64) -> f64 {
    let lap = bg.laplacian(phi).map(|l| l.sup_norm()).unwrap_or(0.0);
    (0..phi.len())
        .map(|i| {
            let p = phi.samples[i];
            (coeffs.rpsi.samples[i] * p).abs()
                .max((coeffs.btaupsi.samples[i] * p.powi(5)).abs())
                .max(density.a_w.samples[i] / (p + eps).powi(7))
        })
        .fold(H_COEFF * lap, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionCert {
    /// Solution of 8Δu + ℛu = A_W + α𝓑₋.
    pub u: Field,
    pub alpha: f64,
    /// Scaling actually applied: φ_sub = theta · u.
    pub theta: f64,
    /// θ from the lemma's conditions, before the extra safety halving.
    pub theta_lemma: f64,
    /// θ evaluated with the positive in-line exponent (max u)^{(N+1)/(N+2)}, logged only.
    pub theta_inline_exponent: f64,
    pub phi_sub: Field,
    /// max over nodes of the ε = 0 subsolution residual (should be ≤ 0).
    pub residual_max: f64,
}

/// Positive subsolution θu with u solving 8Δu + ℛu = A_W + α𝓑₋.
///
/// α is halved from 1 until u > 0 and u ≥ u₁/2, where u₁ is the α = 0
/// solution; the second condition keeps φ_sub above half the Green-function
/// lower bound of u₁.
pub fn build_subsolution(
    bg: &ReducedBackground,
    coeffs: &LichCoefficients,
    density: &MomentumDensity,
) -> Result<SubsolutionCert> {
    if !(density.integral_a > 0.0) {
        return Err(Error::DegenerateDensity(density.integral_a));
    }
    let op = ConformalOperator::new(bg, &coeffs.rpsi)?;
    let u1 = op.solve(&density.a_w);
    if u1.min() <= 0.0 {
        return Err(Error::PositivityViolated { min: u1.min() });
    }
    let has_negative_b = coeffs.b_minus.min() < 0.0;
    let u2 = op.solve(&coeffs.b_minus);
    let mut alpha = 1.0;
    let u = loop {
        let u = u1.add(&u2.scale(alpha));
        let ok = u.min() > 0.0
            && u.samples.iter().zip(&u1.samples).all(|(a, b)| *a >= 0.5 * b);
        if ok || !has_negative_b {
            break u;
        }
        alpha *= 0.5;
        if alpha < 1e-30 {
            return Err(Error::AlphaExhausted);
        }
    };
    let alpha = if has_negative_b { alpha } else { 0.0 };
    let umax = u.max();
    let n = N_CRIT;
    let theta_a = umax.powf(-(n + 1.0) / (n + 2.0));
    let theta_b = if has_negative_b {
        alpha.powf(1.0 / (n - 2.0)) * umax.powf((1.0 - n) / (n - 2.0))
    } else {
        f64::INFINITY
    };
    let theta_lemma = theta_a.min(theta_b);
    let theta_inline_exponent = umax.powf((n + 1.0) / (n + 2.0)).min(theta_b);
    let theta = 0.5 * theta_lemma;
    let phi_sub = u.scale(theta);
    let res = lichnerowicz_residual(bg, coeffs, density, &phi_sub, 0.0)?;
    let residual_max = res.max();
    let tol = 1e-10 * residual_scale(bg, coeffs, density, &phi_sub, 0.0);
    if residual_max > tol {
        return Err(Error::BarrierOrdering(format!(
            "subsolution residual {residual_max:.3e} > 0"
        )));
    }
    Ok(SubsolutionCert {
        u,
        alpha,
        theta,
        theta_lemma,
        theta_inline_exponent,
        phi_sub,
        residual_max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupersolutionKind {
    /// (min φ̄)^{-p} φ̄ with 8Δφ̄ + ℛφ̄ = A_W, used when 𝓑 ≤ 0.
    ScaledLinear { min_phibar: f64, exponent: f64 },
    /// Constant barrier: largest root of ℛ_min c = 𝓑_max c⁵ + max(A)/c⁷.
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Supersolution {
    pub phi_sup: Field,
    pub kind: SupersolutionKind,
    /// min over nodes of the supersolution residual (should be ≥ 0).
    pub residual_min: f64,
}

/// Largest root of g(c) = r c − b c⁵ − a c⁻⁷ (b > 0), or `None` when g < 0
/// everywhere.
fn largest_constant_root(r: f64, b: f64, a: f64) -> Option<f64> {
    let g = |c: f64| r * c - b * c.powi(5) - a / c.powi(7);
    // g′ = r − 5bc⁴ + 7a c⁻⁸ is decreasing, so g is concave with a single peak.
    let dg = |c: f64| r - 5.0 * b * c.powi(4) + 7.0 * a / c.powi(8);
    let cmax = (r / b).powf(0.25);
    let (mut lo, mut hi) = (cmax * 1e-12, cmax);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dg(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let peak = 0.5 * (lo + hi);
    if g(peak) < 0.0 {
        return None;
    }
    // g(peak) ≥ 0 > g(cmax): bisect keeping the left end on the g ≥ 0 side.
    let (mut lo, mut hi) = (peak, cmax);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

pub fn build_supersolution(
    bg: &ReducedBackground,
    coeffs: &LichCoefficients,
    density: &MomentumDensity,
) -> Result<Supersolution> {
    let n = N_CRIT;
    let (phi_sup, kind) = if coeffs.btaupsi.max() <= 0.0 {
        let phibar = solve_linear_conformal(bg, &coeffs.rpsi, &density.a_w)?;
        let a = phibar.min();
        // a^{-(N+1)/N} only dominates the required a^{-(N+1)/(N+2)} when a ≤ 1.
        let exponent = if a <= 1.0 { -(n + 1.0) / n } else { -(n + 1.0) / (n + 2.0) };
        (
            phibar.scale(a.powf(exponent)),
            SupersolutionKind::ScaledLinear {
                min_phibar: a,
                exponent,
            },
        )
    } else {
        let rmin = coeffs.rpsi.min();
        let bmax = coeffs.btaupsi.max();
        let amax = density.a_w.max();
        if rmin <= 0.0 {
            return Err(Error::NoSupersolution(format!(
                "constant barrier needs min R_psi > 0, got {rmin:.3e}"
            )));
        }
        let c = largest_constant_root(rmin, bmax, amax).ok_or_else(|| {
            Error::NoSupersolution(format!(
                "R_min c = B_max c^5 + A_max/c^7 has no positive root (R_min={rmin:.3e}, B_max={bmax:.3e}, A_max={amax:.3e})"
            ))
        })?;
        if bmax * c.powi(4) >= rmin {
            return Err(Error::NoSupersolution(format!(
                "B_max c^4 = {:.3e} >= R_min",
                bmax * c.powi(4)
            )));
        }
        (bg.constant(c), SupersolutionKind::Constant { value: c })
    };
    let res = lichnerowicz_residual(bg, coeffs, density, &phi_sup, 0.0)?;
    let residual_min = res.min();
    let tol = 1e-10 * residual_scale(bg, coeffs, density, &phi_sup, 0.0);
    if residual_min < -tol {
        return Err(Error::NoSupersolution(format!(
            "supersolution residual {residual_min:.3e} < 0"
        )));
    }
    Ok(Supersolution {
        phi_sup,
        kind,
        residual_min,
    })
}

/// I_W(φ) = ½‖φ‖²_h − ∫𝓑φ⁶/6 + ∫A_W/(6φ⁶).
pub fn functional_i(
    bg: &ReducedBackground,
    coeffs: &LichCoefficients,
    density: &MomentumDensity,
    phi: &Field,
) -> Result<f64> {
    let min = phi.min();
    if min <= 0.0 {
        return Err(Error::NonpositivePhi(min));
    }
    let h = bg.h_norm_sq(&coeffs.rpsi, phi)?;
    let pot: f64 = (0..phi.len())
        .map(|i| {
            let p = phi.samples[i];
            -coeffs.btaupsi.samples[i] * p.powi(6) / N_CRIT + density.a_w.samples[i] / (N_CRIT * p.powi(6))
        })
        .sum();
    Ok(0.5 * h + bg.weight * pot)
}

/// I^ε_W(φ) = ½‖φ‖²_h − ∫𝓑|φ|⁶/6 + ∫A_W/(6(φ+ε)⁶) + ∫φ₋⁶, defined on
/// Ω_ε = {φ ≥ −ε/2}.
pub fn functional_i_eps(
    bg: &ReducedBackground,
    coeffs: &LichCoefficients,
    density: &MomentumDensity,
    phi: &Field,
    eps: f64,
) -> Result<f64> {
    let min = phi.min();
    if !(eps > 0.0) || min < -eps / 2.0 {
        return Err(Error::OutsideOmega {
            min,
            bound: -eps / 2.0,
        });
    }
    let h = bg.h_norm_sq(&coeffs.rpsi, phi)?;
    let pot: f64 = (0..phi.len())
        .map(|i| {
            let p = phi.samples[i];
            let neg = (-p).max(0.0);
            -coeffs.btaupsi.samples[i] * p.abs().powi(6) / N_CRIT
                + density.a_w.samples[i] / (N_CRIT * (p + eps).powi(6))
                + neg.powi(6)
        })
        .sum();
    Ok(0.5 * h + bg.weight * pot)
}

/// Gradient of I_W with respect to the nodal values.
pub fn functional_i_gradient(
    bg: &ReducedBackground,
    coeffs: &LichCoefficients,
    density: &MomentumDensity,
    phi: &Field,
) -> Result<Vec<f64>> {
    let res = lichnerowicz_residual(bg, coeffs, density, phi, 0.0)?;
    Ok(res.samples.iter().map(|r| bg.weight * r).collect())
}

/// Jacobian of the ε-regularized residual, which is also the Hessian of
/// I^ε_W (per unit quadrature weight):
/// 8Δ + ℛ − 5𝓑φ⁴ + 7A/(φ+ε)⁸.
fn second_variation(
    bg: &ReducedBackground,
    coeffs: &LichCoefficients,
    density: &MomentumDensity,
    phi: &Field,
    eps: f64,
) -> DMatrix<f64> {
    let n = N_CRIT;
    let potential = Field::untagged(
        (0..phi.len())
            .map(|i| {
                let p = phi.samples[i];
                coeffs.rpsi.samples[i] - (n - 1.0) * coeffs.btaupsi.samples[i] * p.abs().powi(4)
                    + (n + 1.0) * density.a_w.samples[i] / (p + eps).powi(8)
            })
            .collect(),
    );
    bg.operator_matrix(H_COEFF, &potential)
}

/// Smallest eigenvalue of the second variation of I_W at φ.
pub fn hessian_min_eig(
    bg: &ReducedBackground,
    coeffs: &LichCoefficients,
    density: &MomentumDensity,
    phi: &Field,
) -> Result<f64> {
    let min = phi.min();
    if min <= 0.0 {
        return Err(Error::NonpositivePhi(min));
    }
    Ok(geometry::min_eigenvalue(&second_variation(bg, coeffs, density, phi, 0.0)))
}

#[derive(Debug, Clone)]
pub struct LichOptions {
    /// Sup-norm tolerance on the PDE residual.
    pub pde_tol: f64,
    /// Newton step tolerance (sup norm).
    pub step_tol: f64,
    /// Number of positive ε levels before the final ε = 0 solve.
    pub eps_levels: usize,
    pub max_newton: usize,
    /// Initial guess; defaults to the constant-trial minimizer (c/a)^{1/(N+2)}.
    pub init: Option<Field>,
    /// Clamp iterates into [φ_sub, φ_sup].
    pub clamp: bool,
    pub check_stability: bool,
}

impl Default for LichOptions {
    fn default() -> Self {
        LichOptions {
            pde_tol: 1e-9,
            step_tol: 1e-12,
            eps_levels: 12,
            max_newton: 60,
            init: None,
            clamp: true,
            check_stability: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LichSolution {
    pub phi: Field,
    pub energy_h: f64,
    pub phi_sub: Field,
    pub phi_sup: Field,
    pub eps_schedule: Vec<f64>,
    /// ‖φ_{ε_k} − φ_{ε_{k+1}}‖_∞ between consecutive stages.
    pub stage_deltas: Vec<f64>,
    /// Factor applied to φ_sub at each stage so it stays a subsolution of the
    /// regularized equation (1 at ε = 0).
    pub barrier_scales: Vec<f64>,
    pub stable: bool,
    pub hessian_min_eig: f64,
    pub iterations: usize,
    pub functional_value: f64,
    pub residual_sup: f64,
    /// ‖φ‖²_h / (∫A_W)^{2/(N+2)}.
    pub energy_constant: f64,
    pub subsolution: SubsolutionCert,
    pub supersolution_kind: SupersolutionKind,
    pub r0: f64,
}

fn clamp_between(v: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((x, &lo), &hi) in v.iter_mut().zip(lower).zip(upper) {
        *x = x.max(lo).min(hi);
    }
}

struct Stage<'a> {
    bg: &'a ReducedBackground,
    coeffs: &'a LichCoefficients,
    density: &'a MomentumDensity,
    r0: f64,
    opts: &'a LichOptions,
}

impl Stage<'_> {
    fn residual(&self, phi: &Field, eps: f64) -> Field {
        // Shapes were validated by the caller.
        lichnerowicz_residual(self.bg, self.coeffs, self.density, phi, eps).expect("shape checked")
    }

    fn h_norm(&self, phi: &Field) -> f64 {
        self.bg.h_norm_sq(&self.coeffs.rpsi, phi).expect("shape checked").max(0.0).sqrt()
    }

    /// Up to two extra full Newton steps at ε = 0, each kept only if it
    /// lowers the sup residual.
    fn polish(&self, phi: &mut Field, upper: &[f64], lower: &[f64]) -> usize {
        let mut steps = 0;
        let mut res = self.residual(phi, 0.0);
        for _ in 0..2 {
            let jac = second_variation(self.bg, self.coeffs, self.density, phi, 0.0);
            let Some(step) = jac.lu().solve(&-DVector::from_column_slice(&res.samples)) else {
                break;
            };
            let mut cand: Vec<f64> = phi.samples.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
            if self.opts.clamp {
                clamp_between(&mut cand, lower, upper);
            }
            let cand = Field::new(cand, phi.parity);
            let cres = self.residual(&cand, 0.0);
            if cand.min() <= 0.0 || cres.sup_norm() >= res.sup_norm() || self.h_norm(&cand) > self.r0 {
                break;
            }
            *phi = cand;
            res = cres;
            steps += 1;
        }
        steps
    }

    /// Damped Newton at fixed ε; returns the iteration count.
    fn newton(&self, phi: &mut Field, eps: f64, lower: &[f64], upper: &[f64]) -> Result<usize> {
        let l2 = |f: &Field| f.samples.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut res = self.residual(phi, eps);
        // Set when the last line search was cut short by the ball constraint.
        let mut ball_bound: Option<f64> = None;
        let stalled = |ball_bound: Option<f64>, residual: f64, iterations: usize| match ball_bound {
            Some(norm) => Error::LeftBall {
                norm,
                radius: self.r0,
            },
            None => Error::NewtonStagnation {
                eps,
                residual,
                iterations,
            },
        };
        for it in 0..self.opts.max_newton {
            if res.sup_norm() < self.opts.pde_tol {
                return Ok(it);
            }
            let jac = second_variation(self.bg, self.coeffs, self.density, phi, eps);
            let rhs = -DVector::from_column_slice(&res.samples);
            let step = jac.lu().solve(&rhs).ok_or(Error::NewtonStagnation {
                eps,
                residual: res.sup_norm(),
                iterations: it,
            })?;
            let merit = l2(&res);
            let mut t = 1.0;
            let mut left_ball = None;
            let mut accepted = None;
            for _ in 0..40 {
                let mut cand: Vec<f64> = phi
                    .samples
                    .iter()
                    .zip(step.iter())
                    .map(|(p, s)| p + t * s)
                    .collect();
                if self.opts.clamp {
                    clamp_between(&mut cand, lower, upper);
                }
                let cand = Field::new(cand, phi.parity);
                if cand.min() + eps <= 0.0 {
                    t *= 0.5;
                    continue;
                }
                let norm = self.h_norm(&cand);
                if norm > self.r0 {
                    left_ball = Some(norm);
                    t *= 0.5;
                    continue;
                }
                let cres = self.residual(&cand, eps);
                if l2(&cres) < (1.0 - 1e-4 * t) * merit || cres.sup_norm() < self.opts.pde_tol {
                    accepted = Some((cand, cres));
                    break;
                }
                t *= 0.5;
            }
            match accepted {
                Some((cand, cres)) => {
                    let moved = cand.sup_dist(phi);
                    *phi = cand;
                    res = cres;
                    ball_bound = left_ball;
                    if moved < self.opts.step_tol {
                        return if res.sup_norm() < self.opts.pde_tol {
                            Ok(it + 1)
                        } else {
                            Err(stalled(ball_bound, res.sup_norm(), it + 1))
                        };
                    }
                }
                None => return Err(stalled(left_ball, res.sup_norm(), it)),
            }
        }
        if res.sup_norm() < self.opts.pde_tol {
            Ok(self.opts.max_newton)
        } else {
            Err(stalled(ball_bound, res.sup_norm(), self.opts.max_newton))
        }
    }
}

/// Largest factor ρ ∈ (0, 1] (by halving) for which ρ·φ_sub is a subsolution
/// of the ε-regularized equation.
fn barrier_scale(
    bg: &ReducedBackground,
    coeffs: &LichCoefficients,
    density: &MomentumDensity,
    phi_sub: &Field,
    eps: f64,
) -> Result<f64> {
    let mut rho = 1.0;
    for _ in 0..60 {
        let cand = phi_sub.scale(rho);
        let res = lichnerowicz_residual(bg, coeffs, density, &cand, eps)?;
        let tol = 1e-10 * residual_scale(bg, coeffs, density, &cand, eps);
        if res.max() <= tol {
            return Ok(rho);
        }
        rho *= 0.5;
    }
    Err(Error::BarrierOrdering(format!(
        "no scaled subsolution for eps = {eps:.3e}"
    )))
}

pub fn solve_lichnerowicz(
    bg: &ReducedBackground,
    coeffs: &LichCoefficients,
    density: &MomentumDensity,
    estimate: &CoercivityEstimate,
) -> Result<LichSolution> {
    solve_lichnerowicz_with(bg, coeffs, density, estimate, &LichOptions::default())
}

pub fn solve_lichnerowicz_with(
    bg: &ReducedBackground,
    coeffs: &LichCoefficients,
    density: &MomentumDensity,
    estimate: &CoercivityEstimate,
    opts: &LichOptions,
) -> Result<LichSolution> {
    if !(density.integral_a > 0.0) {
        return Err(Error::DegenerateDensity(density.integral_a));
    }
    let sub = build_subsolution(bg, coeffs, density)?;
    let sup = build_supersolution(bg, coeffs, density)?;
    if let Some(i) = (0..bg.m()).find(|&i| sub.phi_sub.samples[i] > sup.phi_sup.samples[i]) {
        return Err(Error::BarrierOrdering(format!(
            "phi_sub = {:.6e} > phi_sup = {:.6e} at node {i}",
            sub.phi_sub.samples[i], sup.phi_sup.samples[i]
        )));
    }
    // R0 depends on sup|𝓑| of these coefficients (λ-scaled in continuation).
    let r0 = geometry::ball_radius(estimate.s_est, coeffs.sup_abs_b);

    let a_int = bg.integrate(&coeffs.rpsi)?;
    let c_int = density.integral_a;
    let eps0 = (c_int / a_int).powf(1.0 / (N_CRIT + 2.0));
    let mut eps_schedule: Vec<f64> = (0..opts.eps_levels)
        .map(|k| eps0 * 0.5f64.powi(k as i32))
        .collect();
    eps_schedule.push(0.0);

    let stage = Stage {
        bg,
        coeffs,
        density,
        r0,
        opts,
    };
    let upper = sup.phi_sup.samples.clone();
    let mut phi = match &opts.init {
        Some(init) => {
            if init.len() != bg.m() {
                return Err(Error::ShapeMismatch {
                    expected: bg.m(),
                    got: init.len(),
                });
            }
            init.clone()
        }
        None => bg.constant(eps0),
    };
    let init_norm = stage.h_norm(&phi);
    if init_norm > r0 {
        phi = phi.scale(0.9 * r0 / init_norm);
    }

    let mut stage_deltas = Vec::new();
    let mut barrier_scales = Vec::new();
    let mut iterations = 0;
    let mut previous: Option<Field> = None;
    for &eps in &eps_schedule {
        let rho = if eps == 0.0 {
            1.0
        } else {
            barrier_scale(bg, coeffs, density, &sub.phi_sub, eps)?
        };
        barrier_scales.push(rho);
        let lower: Vec<f64> = sub.phi_sub.samples.iter().map(|x| rho * x).collect();
        if opts.clamp {
            clamp_between(&mut phi.samples, &lower, &upper);
        }
        iterations += stage.newton(&mut phi, eps, &lower, &upper)?;
        if let Some(prev) = &previous {
            stage_deltas.push(prev.sup_dist(&phi));
        }
        previous = Some(phi.clone());
    }
    phi.parity = coeffs.rpsi.parity.product(density.a_w.parity);
    iterations += stage.polish(&mut phi, &upper, &sub.phi_sub.samples);

    let residual_sup = stage.residual(&phi, 0.0).sup_norm();
    if residual_sup >= opts.pde_tol {
        return Err(Error::NewtonStagnation {
            eps: 0.0,
            residual: residual_sup,
            iterations,
        });
    }
    let min = phi.min();
    if min <= 0.0 {
        return Err(Error::NonpositivePhi(min));
    }
    let hmin = if opts.check_stability {
        hessian_min_eig(bg, coeffs, density, &phi)?
    } else {
        f64::NAN
    };
    if opts.check_stability && hmin <= 0.0 {
        return Err(Error::Instability(hmin));
    }
    let energy_h = bg.h_norm_sq(&coeffs.rpsi, &phi)?;
    Ok(LichSolution {
        functional_value: functional_i(bg, coeffs, density, &phi)?,
        energy_constant: energy_h / c_int.powf(2.0 / (N_CRIT + 2.0)),
        energy_h,
        phi,
        phi_sub: sub.phi_sub.clone(),
        phi_sup: sup.phi_sup,
        eps_schedule,
        stage_deltas,
        barrier_scales,
        stable: hmin > 0.0,
        hessian_min_eig: hmin,
        iterations,
        residual_sup,
        subsolution: sub,
        supersolution_kind: sup.kind,
        r0,
    })
}

/// Cross-check route: projected, h-preconditioned gradient descent on I_W over
/// the box [φ_sub, φ_sup]. Slow (linear convergence) but independent of the
/// Newton machinery.
pub fn minimize_by_projected_descent(
    bg: &ReducedBackground,
    coeffs: &LichCoefficients,
    density: &MomentumDensity,
    max_iter: usize,
    step_tol: f64,
) -> Result<Field> {
    let sub = build_subsolution(bg, coeffs, density)?;
    let sup = build_supersolution(bg, coeffs, density)?;
    let op = ConformalOperator::new(bg, &coeffs.rpsi)?;
    let lower = &sub.phi_sub.samples;
    let upper = &sup.phi_sup.samples;
    let mut phi = sub.phi_sub.add(&sup.phi_sup).scale(0.5);
    let mut value = functional_i(bg, coeffs, density, &phi)?;
    let mut t: f64 = 1.0;
    for _ in 0..max_iter {
        let grad = functional_i_gradient(bg, coeffs, density, &phi)?;
        // Riesz representative of the gradient in the h inner product.
        let g = op.solve(&Field::untagged(grad.iter().map(|x| x / bg.weight).collect()));
        let mut accepted = None;
        let mut tt = (2.0 * t).min(1.0);
        for _ in 0..50 {
            let mut cand: Vec<f64> = phi.samples.iter().zip(&g.samples).map(|(p, d)| p - tt * d).collect();
            clamp_between(&mut cand, lower, upper);
            let cand = Field::new(cand, phi.parity);
            let v = functional_i(bg, coeffs, density, &cand)?;
            let decrease: f64 = grad
                .iter()
                .zip(cand.samples.iter().zip(&phi.samples))
                .map(|(g, (c, p))| g * (c - p))
                .sum();
            if v <= value + 1e-4 * decrease {
                accepted = Some((cand, v));
                break;
            }
            tt *= 0.5;
        }
        let Some((cand, v)) = accepted else { break };
        t = tt;
        let moved = cand.sup_dist(&phi);
        phi = cand;
        value = v;
        if moved < step_tol {
            break;
        }
    }
    Ok(phi)
}
