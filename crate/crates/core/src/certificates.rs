//! Computable bounds for solved states, all empirical: the constants come
//! from the current run (quotient minimizations, norms of the computed W),
//! not from rigorous estimates.
//!
//! Moser chain. Testing the Lichnerowicz equation against φ^{N+1+2k} and
//! writing u = φ^m, m = N/2 + 1 + k, gives
//!
//! ```text
//! s_k ‖u‖²_{L^N} ≤ sup|𝓑| ∫φ^{2N+2k} + ∫A_W φ^{2k},
//! ```
//!
//! where s_k is the coercivity constant of (8(N+1+2k)/m²)Δ + ℛ_ψ. Hölder
//! with weights x, 1 − x on ∫φ^{Nm} and ∫φ^{2N} and with exponents q/2,
//! q/(q−2) on the source turn this into s t ≤ a t^{xN/2} + b for
//! t = ‖u‖²_{L^N}, whose positive root bounds ‖φ‖_{L^{Nm}}.

use serde::{Deserialize, Serialize};

use crate::coupled::CoupledRun;
use crate::error::{Error, Result};
use crate::geometry::{Field, ReducedBackground, H_COEFF, N_CRIT};
use crate::lichnerowicz::{momentum_density, ConformalOperator, SubsolutionCert};
use crate::parallel::{self, Execution};
use crate::seed::{coefficients, SeedData};
use crate::sobolev::{minimize_quotient_with_trials, QuotientOptions};

pub const MAX_DEPTH: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateChain {
    /// q₀ = 2, q_{i+1} = (N/2)(q_i − 1) + 1.
    pub q: Vec<u64>,
    /// k_i = (N/2)(q_i − 2).
    pub k: Vec<u64>,
    pub x: Vec<f64>,
    /// Bounds on ‖φ‖_{L^{N q_i}}.
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    /// ‖A_W‖_{L^{q_i/2}}.
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCert {
    pub green_min: f64,
    pub eta: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

impl Audit {
    fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Audit {
            name: name.into(),
            value,
            bound,
            passed: value <= bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub chain: CertificateChain,
    pub lower: LowerBoundCert,
    pub audits: Vec<Audit>,
    pub all_passed: bool,
}

/// (q_i) for i = 0..=depth and (k_i) for i = 0..depth.
pub fn chain_exponents(depth: usize) -> (Vec<u64>, Vec<u64>) {
    let half = N_CRIT as u64 / 2;
    let mut q = vec![2u64];
    for i in 0..depth {
        q.push(half * (q[i] - 1) + 1);
    }
    let k = q[..depth].iter().map(|&qi| half * (qi - 2)).collect();
    (q, k)
}

/// Positive root of s t = a t^p + b, 0 ≤ p < 1.
fn recursion_root(s: f64, a: f64, p: f64, b: f64) -> f64 {
    let g = |t: f64| s * t - a * t.powf(p) - b;
    let mut hi = 1.0;
    while g(hi) <= 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Chain of L^{N q_i} bounds starting from ∫φ^{2N} ≤ `r_stable`.
pub fn moser_chain(
    bg: &ReducedBackground,
    seed: &SeedData,
    f: &Field,
    r_stable: f64,
    depth: usize,
    opts: &QuotientOptions,
) -> Result<CertificateChain> {
    if depth > MAX_DEPTH {
        return Err(Error::Config {
            key: "certify.depth".into(),
            message: format!("must be at most {MAX_DEPTH}, got {depth}"),
        });
    }
    let coeffs = coefficients(bg, seed)?;
    if coeffs.rpsi.min() <= 0.0 {
        return Err(Error::ChainInfeasible {
            level: 0,
            reason: format!("the chain needs R_psi > 0, min is {:.3e}", coeffs.rpsi.min()),
        });
    }
    let density = momentum_density(bg, seed, f)?;
    let n = N_CRIT;
    let (q, k) = chain_exponents(depth);
    let mut r = vec![r_stable.powf(1.0 / (2.0 * n))];
    let (mut x, mut s, mut c) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..depth {
        let ki = k[i] as f64;
        let qi = q[i] as f64;
        let m = n / 2.0 + 1.0 + ki;
        let xi = 2.0 * ki / (n * ki + n * (n / 2.0 - 1.0));
        let op = bg.operator_matrix(H_COEFF * (n + 1.0 + 2.0 * ki) / (m * m), &coeffs.rpsi);
        let eig = nalgebra::SymmetricEigen::new(op.clone());
        let lowest = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bv), (j, &v)| if v < bv { (j, v) } else { (bi, bv) })
            .0;
        let vec = eig.eigenvectors.column(lowest);
        let sign = if vec.sum() < 0.0 { -1.0 } else { 1.0 };
        let start = Field::untagged(vec.iter().map(|v| sign * v).collect());
        let si = minimize_quotient_with_trials(bg, &op, opts, &[("eigenvector".into(), start)])?.value;
        if !(si > 0.0) {
            return Err(Error::ChainInfeasible {
                level: i,
                reason: format!("coercivity estimate s = {si:.3e}"),
            });
        }
        let ci = bg.lp_norm(&density.a_w, qi / 2.0);
        let a = coeffs.sup_abs_b * r_stable.powf(1.0 - xi);
        let b = ci * r[i].powf(2.0 * ki);
        let t = recursion_root(si, a, xi * n / 2.0, b);
        if !t.is_finite() {
            return Err(Error::ChainInfeasible {
                level: i,
                reason: "recursion has no finite root".into(),
            });
        }
        r.push(t.powf(1.0 / (2.0 * m)));
        x.push(xi);
        s.push(si);
        c.push(ci);
    }
    Ok(CertificateChain { q, k, x, r, s, c })
}

/// Discrete Green kernel G = A⁻¹/w of A = 8Δ + ℛ_ψ, assembled by columns.
pub fn green_kernel(bg: &ReducedBackground, rpsi: &Field, exec: Execution) -> Result<nalgebra::DMatrix<f64>> {
    let op = ConformalOperator::new(bg, rpsi)?;
    let m = bg.m();
    let cols = parallel::map_indexed(exec, m, |j| {
        let mut e = vec![0.0; m];
        e[j] = 1.0 / bg.weight;
        op.solve(&Field::untagged(e)).samples
    });
    Ok(nalgebra::DMatrix::from_fn(m, m, |i, j| cols[j][i]))
}

pub fn green_lower_bound(bg: &ReducedBackground, rpsi: &Field) -> Result<f64> {
    let g = green_kernel(bg, rpsi, Execution::default())?;
    let min = g.min();
    if min <= 0.0 {
        return Err(Error::NonpositiveGreen(min));
    }
    Ok(min)
}

/// η = (G_min θ / 2) ∫(|σ|² + π²).
pub fn eta_bound(cert: &SubsolutionCert, green_min: f64, bg: &ReducedBackground, seed: &SeedData) -> Result<LowerBoundCert> {
    Ok(LowerBoundCert {
        green_min,
        eta: green_min * cert.theta / 2.0 * seed.data_size(bg)?,
        theta: cert.theta,
    })
}

/// Chain, lower bound and audits against a converged coupled run.
pub fn certify(
    bg: &ReducedBackground,
    seed: &SeedData,
    run: &CoupledRun,
    depth: usize,
    opts: &QuotientOptions,
) -> Result<CertificateReport> {
    let phi = &run.state.phi;
    let chain = moser_chain(bg, seed, &run.state.f, run.params.r, depth, opts)?;
    let coeffs = coefficients(bg, seed)?;
    let green = green_kernel(bg, &coeffs.rpsi, opts.exec)?;
    let green_min = green.min();
    if green_min <= 0.0 {
        return Err(Error::NonpositiveGreen(green_min));
    }
    let lower = eta_bound(&run.lich.subsolution, green_min, bg, seed)?;

    let mut audits = Vec::new();
    for (i, &qi) in chain.q.iter().enumerate() {
        let p = N_CRIT * qi as f64;
        audits.push(Audit::at_most(format!("norm_L{p}"), bg.lp_norm(phi, p), chain.r[i]));
    }
    audits.push(Audit::at_most("eta_below_min_phi", lower.eta, phi.min()));
    let below = (0..bg.m())
        .map(|i| run.lich.phi_sub.samples[i] - phi.samples[i])
        .fold(f64::NEG_INFINITY, f64::max);
    audits.push(Audit::at_most("phi_sub_minus_phi", below, 0.0));
    let above = (0..bg.m())
        .map(|i| phi.samples[i] - run.lich.phi_sup.samples[i])
        .fold(f64::NEG_INFINITY, f64::max);
    audits.push(Audit::at_most("phi_minus_phi_sup", above, 0.0));
    let asym = (&green - green.transpose()).amax() / green.amax();
    audits.push(Audit::at_most("green_asymmetry", asym, 1e-10));
    let all_passed = audits.iter().all(|a| a.passed);
    Ok(CertificateReport {
        chain,
        lower,
        audits,
        all_passed,
    })
}
