//! The reduced vector equation for W = f dθ:
//!
//! ```text
//! (4/3) f″ = (2/3) φ⁶ τ′ − π ψ′.
//! ```
//!
//! ∂_θ is a conformal Killing field of the background, so the operator has
//! the constants in its kernel. The right-hand side is projected to zero mean
//! and f is normalized to zero mean; the size of the removed component is
//! reported as the obstruction. For even seeds and even φ the right-hand side
//! is odd and the obstruction vanishes identically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Field, ReducedBackground};
use crate::seed::SeedData;
use crate::sobolev::{self, QuotientMin, QuotientOptions};

/// Above this the obstruction counts as a violated compatibility condition.
pub const OBSTRUCTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorSolve {
    pub f: Field,
    /// |mean(rhs)| · volume: the pairing of the right-hand side with ∂_θ.
    pub obstruction: f64,
    /// ‖(4/3)f″ − (rhs − mean rhs)‖_∞.
    pub residual: f64,
}

/// (2/3)φ⁶τ′ − πψ′.
pub fn vector_rhs(bg: &ReducedBackground, seed: &SeedData, phi: &Field) -> Result<Field> {
    let min = phi.min();
    if min <= 0.0 {
        return Err(Error::NonpositivePhi(min));
    }
    vector_rhs_scaled(bg, seed, phi, 1.0)
}

/// λ(2/3)φ⁶τ′ − πψ′, the continuation family's source.
pub fn vector_rhs_scaled(bg: &ReducedBackground, seed: &SeedData, phi: &Field, lambda: f64) -> Result<Field> {
    let dtau = bg.deriv(&seed.tau)?;
    let dpsi = bg.deriv(&seed.psi)?;
    let parity = phi.parity.product(dtau.parity);
    let samples = (0..bg.m())
        .map(|i| {
            lambda * (2.0 / 3.0) * phi.samples[i].powi(6) * dtau.samples[i] - seed.pi.samples[i] * dpsi.samples[i]
        })
        .collect();
    Ok(Field::new(samples, parity))
}

/// Solve (4/3)f″ = rhs − mean(rhs) with mean(f) = 0 by Fourier inversion.
pub fn solve_vector(bg: &ReducedBackground, rhs: &Field, strict: bool) -> Result<VectorSolve> {
    let mean = rhs.mean();
    let obstruction = mean.abs() * bg.volume;
    if strict && obstruction > OBSTRUCTION_TOL {
        return Err(Error::ObstructionAboveTolerance {
            obstruction,
            tolerance: OBSTRUCTION_TOL,
        });
    }
    // (4/3)f″ = −(4/3)Δf.
    let f = bg.inverse_laplacian(rhs)?.scale(-0.75);
    let projected = rhs.map(|r| r - mean);
    let residual = bg.vector_laplacian(&f)?.sub(&projected).sup_norm();
    Ok(VectorSolve {
        f,
        obstruction,
        residual,
    })
}

/// Numerical Korn-type constant: inf ∫(8/3)(f′)² / (∫|f|⁶)^{1/3} over
/// mean-free f. The descent returns an upper bound on the true infimum.
pub fn estimate_gamma(bg: &ReducedBackground, opts: &QuotientOptions) -> Result<QuotientMin> {
    let op = bg.laplacian_matrix() * (8.0 / 3.0);
    let opts = QuotientOptions {
        zero_mean: true,
        ..opts.clone()
    };
    sobolev::minimize_quotient(bg, &op, &opts)
}
