//! The coupled system by Picard iteration of
//!
//! ```text
//! Φ(φ₀) = Lichnerowicz solution with density A_W, W solving the vector
//!         equation with φ₀,
//! ```
//!
//! monitored against the stable set C = {∫φ^{2N} ≤ R}.
//!
//! Contracting the vector equation with W and using Hölder (exponents
//! 1/2 + 1/3 + 1/6) and the Korn-type bound ∫|𝕃W|² ≥ γ‖W‖²_{L⁶} with
//! Young's inequality at weight γ/4 gives
//!
//! ```text
//! ∫|𝕃W|² ≤ (32/9)(T/γ) ∫φ₀¹² + 8(Ψ/γ) ∫π²,
//! ```
//!
//! T = ‖τ′‖²_{L³}, Ψ = ‖ψ′‖²_{L³}. Since ∫⟨σ, 𝕃W⟩ = 0 this bounds ∫A_W by
//! ∫|σ|² + c₁ y₀ + (1 + c₂)∫π².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CoercivityEstimate, Field, Parity, ReducedBackground, N_CRIT};
use crate::lichnerowicz::{momentum_density, solve_lichnerowicz_with, LichOptions, LichSolution};
use crate::momentum::{solve_vector, vector_rhs};
use crate::seed::{coefficients, LichCoefficients, SeedData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableSetParams {
    /// ∫(|σ|² + (1 + c₂)π²).
    pub x: f64,
    /// (s′/2)·vol^{-(N−2)/(2N)}.
    pub lam: f64,
    /// 2(x/lam)^{2N/(N+2)}.
    pub r: f64,
    pub c1: f64,
    pub c2: f64,
    pub gamma: f64,
    /// f(R) ≤ R for f(y) = ((x + c₁y)/lam)^{2N/(N+2)}.
    pub feasible: bool,
    pub f_of_r: f64,
}

impl StableSetParams {
    pub fn bound(&self, y0: f64) -> f64 {
        ((self.x + self.c1 * y0) / self.lam).powf(2.0 * N_CRIT / (N_CRIT + 2.0))
    }
}

/// (c₁, c₂) = ((32/9)T/γ, 8Ψ/γ).
pub fn constants_c1_c2(bg: &ReducedBackground, seed: &SeedData, gamma: f64) -> Result<(f64, f64)> {
    if !(gamma > 0.0) {
        return Err(Error::Config {
            key: "gamma".into(),
            message: format!("must be positive, got {gamma}"),
        });
    }
    let t = bg.lp_norm(&bg.deriv(&seed.tau)?, 3.0).powi(2);
    let psi = bg.lp_norm(&bg.deriv(&seed.psi)?, 3.0).powi(2);
    Ok((32.0 / 9.0 * t / gamma, 8.0 * psi / gamma))
}

pub fn stable_set_params(
    bg: &ReducedBackground,
    seed: &SeedData,
    estimate: &CoercivityEstimate,
    gamma: f64,
) -> Result<StableSetParams> {
    let (c1, c2) = constants_c1_c2(bg, seed, gamma)?;
    let x = bg.integrate(&seed.pi.map(|p| seed.sigma_norm_sq() + (1.0 + c2) * p * p))?;
    let lam = estimate.s_prime_est / 2.0 * bg.volume.powf(-(N_CRIT - 2.0) / (2.0 * N_CRIT));
    let expo = 2.0 * N_CRIT / (N_CRIT + 2.0);
    let r = 2.0 * (x / lam).powf(expo);
    let mut p = StableSetParams {
        x,
        lam,
        r,
        c1,
        c2,
        gamma,
        feasible: false,
        f_of_r: 0.0,
    };
    p.f_of_r = p.bound(r);
    p.feasible = p.f_of_r <= r;
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledState {
    pub phi: Field,
    pub f: Field,
    pub iter: usize,
    /// ∫φ^{2N}.
    pub y: f64,
    pub in_c: bool,
    pub delta: f64,
    pub residual_lich: f64,
    pub residual_vec: f64,
    pub obstruction: f64,
    pub energy_h: f64,
    /// ∫A_W ≤ ∫|σ|² + c₁y₀ + (1 + c₂)∫π² held for this step.
    pub bound_audit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub delta: f64,
    pub y: f64,
    pub residual_lich: f64,
    pub residual_vec: f64,
    pub obstruction: f64,
    pub in_c: bool,
}

#[derive(Debug, Clone)]
pub struct CoupledOptions {
    pub delta_tol: f64,
    pub max_iter: usize,
    pub residual_tol: f64,
    pub strict_momentum: bool,
    pub lich: LichOptions,
}

impl Default for CoupledOptions {
    fn default() -> Self {
        CoupledOptions {
            delta_tol: 1e-10,
            max_iter: 200,
            residual_tol: 1e-8,
            strict_momentum: true,
            lich: LichOptions {
                check_stability: false,
                ..LichOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub enum CoupledInit {
    /// The decoupled solve with f ≡ 0.
    Auto,
    Phi(Field),
}

#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub state: CoupledState,
    pub trace: Vec<TraceRow>,
    pub params: StableSetParams,
    /// ∫(|σ|² + π²).
    pub data_size: f64,
    /// Lichnerowicz solve of the last step (barriers, stability).
    pub lich: LichSolution,
    pub all_in_c: bool,
}

fn y_of(bg: &ReducedBackground, phi: &Field) -> f64 {
    bg.integrate_slice(&phi.samples.iter().map(|p| p.powf(2.0 * N_CRIT)).collect::<Vec<_>>())
}

struct Context<'a> {
    bg: &'a ReducedBackground,
    seed: &'a SeedData,
    coeffs: LichCoefficients,
    estimate: &'a CoercivityEstimate,
    params: &'a StableSetParams,
    opts: &'a CoupledOptions,
}

impl Context<'_> {
    fn apply(&self, phi0: &Field, iter: usize) -> Result<(CoupledState, LichSolution)> {
        let rhs = vector_rhs(self.bg, self.seed, phi0)?;
        let vs = solve_vector(self.bg, &rhs, self.opts.strict_momentum)?;
        let density = momentum_density(self.bg, self.seed, &vs.f)?;
        let lich = solve_lichnerowicz_with(self.bg, &self.coeffs, &density, self.estimate, &self.opts.lich)?;
        let phi = lich.phi.clone();
        let y = y_of(self.bg, &phi);
        let y0 = y_of(self.bg, phi0);
        let pi_sq = self.bg.integrate(&self.seed.pi.map(|p| p * p))?;
        let sigma_sq = self.seed.sigma_norm_sq() * self.bg.volume;
        let bound = sigma_sq + self.params.c1 * y0 + (1.0 + self.params.c2) * pi_sq;
        let bound_audit = density.integral_a <= bound * (1.0 + 1e-12);
        // Coupled residuals at the new (φ, f): the vector equation is
        // evaluated with the new φ, so it vanishes only at a fixed point.
        let (res_l, res_v) = crate::reconstruction::conformal_residuals(self.bg, self.seed, &phi, &vs.f)?;
        let state = CoupledState {
            delta: phi.sup_dist(phi0),
            phi,
            f: vs.f,
            iter,
            y,
            in_c: y <= self.params.r,
            residual_lich: res_l.sup_norm(),
            residual_vec: res_v.sup_norm(),
            obstruction: vs.obstruction,
            energy_h: lich.energy_h,
            bound_audit,
        };
        Ok((state, lich))
    }
}

/// One application of Φ.
pub fn phi_map(
    bg: &ReducedBackground,
    seed: &SeedData,
    estimate: &CoercivityEstimate,
    params: &StableSetParams,
    phi0: &Field,
    opts: &CoupledOptions,
) -> Result<CoupledState> {
    let ctx = Context {
        bg,
        seed,
        coeffs: coefficients(bg, seed)?,
        estimate,
        params,
        opts,
    };
    Ok(ctx.apply(phi0, 1)?.0)
}

/// Lichnerowicz solve with W = 0.
pub fn decoupled_solve(
    bg: &ReducedBackground,
    seed: &SeedData,
    estimate: &CoercivityEstimate,
    opts: &LichOptions,
) -> Result<LichSolution> {
    let coeffs = coefficients(bg, seed)?;
    let zero = Field::new(vec![0.0; bg.m()], Parity::Odd);
    let density = momentum_density(bg, seed, &zero)?;
    solve_lichnerowicz_with(bg, &coeffs, &density, estimate, opts)
}

pub fn solve_coupled(
    bg: &ReducedBackground,
    seed: &SeedData,
    estimate: &CoercivityEstimate,
    params: &StableSetParams,
    init: &CoupledInit,
    opts: &CoupledOptions,
) -> Result<CoupledRun> {
    let ctx = Context {
        bg,
        seed,
        coeffs: coefficients(bg, seed)?,
        estimate,
        params,
        opts,
    };
    let mut phi = match init {
        CoupledInit::Auto => decoupled_solve(bg, seed, estimate, &opts.lich)?.phi,
        CoupledInit::Phi(p) => p.clone(),
    };
    let mut trace = Vec::new();
    let mut deltas = Vec::new();
    let mut all_in_c = y_of(bg, &phi) <= params.r;
    for iter in 1..=opts.max_iter {
        let (state, lich) = ctx.apply(&phi, iter)?;
        trace.push(TraceRow {
            iter,
            delta: state.delta,
            y: state.y,
            residual_lich: state.residual_lich,
            residual_vec: state.residual_vec,
            obstruction: state.obstruction,
            in_c: state.in_c,
        });
        deltas.push(state.delta);
        all_in_c &= state.in_c;
        phi = state.phi.clone();
        if state.delta < opts.delta_tol
            && state.residual_lich < opts.residual_tol
            && state.residual_vec < opts.residual_tol
        {
            return Ok(CoupledRun {
                state,
                trace,
                params: params.clone(),
                data_size: seed.data_size(bg)?,
                lich,
                all_in_c,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        last_delta: deltas.last().copied().unwrap_or(f64::NAN),
        deltas,
    })
}
