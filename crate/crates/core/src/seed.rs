//! Seed data (τ, ψ, π, σ, V) in reduced form and the Lichnerowicz
//! coefficients ℛ_ψ, 𝓑_{τ,ψ} derived from them.
//!
//! σ is the constant-amplitude TT tensor s₀(2dθ² − ĝ_{S²}): trace 2s₀ − 2s₀ = 0,
//! and its divergence ∂_θ(2s₀) vanishes, so it is exactly transverse-traceless.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Field, Parity, ReducedBackground, H_COEFF, SCAL};

/// Mean plus cosine (and, only to be rejected, sine) coefficients.
/// `cos[i]` multiplies cos(2π(i+1)θ/L).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierSpec {
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sin: Vec<f64>,
}

impl FourierSpec {
    pub fn constant(mean: f64) -> Self {
        FourierSpec {
            mean,
            ..Default::default()
        }
    }

    pub fn cosines(mean: f64, cos: Vec<f64>) -> Self {
        FourierSpec {
            mean,
            cos,
            sin: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub tau: FourierSpec,
    #[serde(default)]
    pub psi: FourierSpec,
    #[serde(default)]
    pub pi: FourierSpec,
    pub sigma_amp: f64,
    pub potential: PotentialConfig,
}

impl SeedConfig {
    /// The far-from-CMC benchmark: τ = 1 + 2cos θ, ψ = 0.1cos θ, π ≡ 0.01,
    /// s₀ = 0.01, V(x) = 0.1 + 0.05x².
    pub fn benchmark() -> Self {
        SeedConfig {
            tau: FourierSpec::cosines(1.0, vec![2.0]),
            psi: FourierSpec::cosines(0.0, vec![0.1]),
            pi: FourierSpec::constant(0.01),
            sigma_amp: 0.01,
            potential: PotentialConfig {
                coeffs: vec![0.1, 0.0, 0.05],
            },
        }
    }

    /// The exact constant solution φ ≡ 1, W = 0:
    /// τ ≡ √3, ψ ≡ 0, π ≡ 1, s₀ = 1/√6, V ≡ 1.
    pub fn exact_constant() -> Self {
        SeedConfig {
            tau: FourierSpec::constant(3f64.sqrt()),
            psi: FourierSpec::default(),
            pi: FourierSpec::constant(1.0),
            sigma_amp: 1.0 / 6f64.sqrt(),
            potential: PotentialConfig { coeffs: vec![1.0] },
        }
    }
}

/// Polynomial potential V(x) = Σ c_k x^k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub poly_coeffs: Vec<f64>,
}

impl Potential {
    pub const MAX_DEGREE: usize = 8;

    pub fn new(poly_coeffs: Vec<f64>) -> Result<Self> {
        if poly_coeffs.len() > Self::MAX_DEGREE + 1 {
            return Err(Error::Config {
                key: "potential.coeffs".into(),
                message: format!("degree must be at most {}", Self::MAX_DEGREE),
            });
        }
        if poly_coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config {
                key: "potential.coeffs".into(),
                message: "coefficients must be finite".into(),
            });
        }
        Ok(Potential { poly_coeffs })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.poly_coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// V′(x). Only the evolution equation needs it; kept for completeness.
    pub fn derivative(&self, x: f64) -> f64 {
        self.poly_coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedData {
    pub tau: Field,
    pub psi: Field,
    pub pi: Field,
    pub sigma_amp: f64,
    pub potential: Potential,
}

impl SeedData {
    /// |σ|² = 4s₀² + 2s₀².
    pub fn sigma_norm_sq(&self) -> f64 {
        6.0 * self.sigma_amp * self.sigma_amp
    }

    /// Copy with σ and π multiplied by `factor`.
    pub fn with_scaled_tt_data(&self, factor: f64) -> SeedData {
        SeedData {
            sigma_amp: self.sigma_amp * factor,
            pi: self.pi.scale(factor),
            ..self.clone()
        }
    }

    /// ∫ (|σ|² + π²) dμ.
    pub fn data_size(&self, bg: &ReducedBackground) -> Result<f64> {
        let integrand = self.pi.map(|p| p * p + self.sigma_norm_sq());
        bg.integrate(&integrand)
    }
}

fn sample_spec(bg: &ReducedBackground, spec: &FourierSpec, key: &str) -> Result<Field> {
    if let Some(k) = spec.sin.iter().position(|&c| c != 0.0) {
        return Err(Error::ParityViolation(format!(
            "{key}.sin[{k}] is nonzero but {key} must be even"
        )));
    }
    let limit = bg.m() / 2;
    if let Some(last) = spec.cos.iter().rposition(|&c| c != 0.0) {
        let mode = last + 1;
        if mode >= limit {
            return Err(Error::UnresolvedMode { mode, limit });
        }
    }
    Ok(bg.field_from_fn(Parity::Even, |t| {
        spec.mean
            + spec
                .cos
                .iter()
                .enumerate()
                .map(|(i, c)| c * (bg.mode_frequency(i + 1) * t).cos())
                .sum::<f64>()
    }))
}

pub fn build_seed(bg: &ReducedBackground, config: &SeedConfig) -> Result<SeedData> {
    if !config.sigma_amp.is_finite() {
        return Err(Error::Config {
            key: "sigma_amp".into(),
            message: "must be finite".into(),
        });
    }
    Ok(SeedData {
        tau: sample_spec(bg, &config.tau, "tau")?,
        psi: sample_spec(bg, &config.psi, "psi")?,
        pi: sample_spec(bg, &config.pi, "pi")?,
        sigma_amp: config.sigma_amp,
        potential: Potential::new(config.potential.coeffs.clone())?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LichCoefficients {
    pub rpsi: Field,
    pub btaupsi: Field,
    pub b_minus: Field,
    pub b_plus: Field,
    pub sup_abs_b: f64,
}

impl LichCoefficients {
    pub fn from_fields(rpsi: Field, btaupsi: Field) -> Self {
        let b_minus = btaupsi.map(|b| b.min(0.0));
        let b_plus = btaupsi.map(|b| b.max(0.0));
        let sup_abs_b = btaupsi.sup_norm();
        LichCoefficients {
            rpsi,
            btaupsi,
            b_minus,
            b_plus,
            sup_abs_b,
        }
    }

    /// Same ℛ_ψ with 𝓑 multiplied by `factor` (λ² in the continuation family).
    pub fn with_scaled_b(&self, factor: f64) -> Self {
        LichCoefficients::from_fields(self.rpsi.clone(), self.btaupsi.scale(factor))
    }
}

/// ℛ_ψ = Scal − (ψ′)², 𝓑_{τ,ψ} = −(2/3)τ² + 2V(ψ).
pub fn coefficients(bg: &ReducedBackground, seed: &SeedData) -> Result<LichCoefficients> {
    let dpsi = bg.deriv(&seed.psi)?;
    let rpsi = Field::new(
        dpsi.samples.iter().map(|d| SCAL - d * d).collect(),
        Parity::Even,
    );
    let btaupsi = seed.tau.zip_map(&seed.psi, Parity::Even, |t, p| {
        -(2.0 / 3.0) * t * t + 2.0 * seed.potential.eval(p)
    });
    Ok(LichCoefficients::from_fields(rpsi, btaupsi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coercivity {
    /// min ℛ_ψ > 0.
    ByPositivity,
    /// ℛ_ψ takes negative values but the operator's lowest eigenvalue is positive.
    ByEigenvalue,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub coercivity: Coercivity,
    pub min_rpsi: f64,
    pub lambda_min_h: f64,
    pub parity_ok: bool,
    pub failures: Vec<String>,
}

pub fn validate(bg: &ReducedBackground, seed: &SeedData) -> ValidationReport {
    let mut failures = Vec::new();
    let mut parity_ok = true;
    for (name, f) in [("tau", &seed.tau), ("psi", &seed.psi), ("pi", &seed.pi)] {
        if f.len() != bg.m() {
            failures.push(format!("{name}: expected {} samples, got {}", bg.m(), f.len()));
            parity_ok = false;
            continue;
        }
        if f.parity != Parity::Even {
            failures.push(format!("parity: {name} must be tagged even, found {:?}", f.parity));
            parity_ok = false;
        } else if let Err(e) = f.check_parity(1e-12 * f.sup_norm().max(1.0)) {
            failures.push(format!("{name}: {e}"));
            parity_ok = false;
        }
    }
    if !parity_ok {
        return ValidationReport {
            passed: false,
            coercivity: Coercivity::Violated,
            min_rpsi: f64::NAN,
            lambda_min_h: f64::NAN,
            parity_ok,
            failures,
        };
    }
    let (min_rpsi, lambda_min_h) = match coefficients(bg, seed) {
        Ok(c) => (
            c.rpsi.min(),
            geometry::min_eigenvalue(&bg.operator_matrix(H_COEFF, &c.rpsi)),
        ),
        Err(e) => {
            failures.push(e.to_string());
            (f64::NAN, f64::NAN)
        }
    };
    let coercivity = if min_rpsi > 0.0 {
        Coercivity::ByPositivity
    } else if lambda_min_h > 0.0 {
        Coercivity::ByEigenvalue
    } else {
        failures.push(format!(
            "coercivity violated: min R_psi = {min_rpsi:.4e}, lambda_min_h = {lambda_min_h:.4e}"
        ));
        Coercivity::Violated
    };
    ValidationReport {
        passed: failures.is_empty(),
        coercivity,
        min_rpsi,
        lambda_min_h,
        parity_ok,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_background, GridSpec};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn bg() -> ReducedBackground {
        build_background(GridSpec::new(64, 2.0 * PI).unwrap()).unwrap()
    }

    fn cfg(tau: FourierSpec, psi: FourierSpec, v: Vec<f64>) -> SeedConfig {
        SeedConfig {
            tau,
            psi,
            pi: FourierSpec::default(),
            sigma_amp: 0.0,
            potential: PotentialConfig { coeffs: v },
        }
    }

    #[test]
    fn far_from_cmc_tau() {
        let b = bg();
        let s = build_seed(&b, &cfg(FourierSpec::cosines(1.0, vec![2.0]), FourierSpec::default(), vec![0.0])).unwrap();
        let exact = b.field_from_fn(Parity::Even, |t| 1.0 + 2.0 * t.cos());
        assert!(s.tau.sup_dist(&exact) < 1e-14);
        assert_eq!(s.tau.parity, Parity::Even);
    }

    #[test]
    fn rejects_nyquist_and_sines() {
        let b = bg();
        let mut cos = vec![0.0; 32];
        cos[31] = 1.0;
        let e = build_seed(&b, &cfg(FourierSpec::cosines(1.0, cos), FourierSpec::default(), vec![0.0])).unwrap_err();
        assert_eq!(e, Error::UnresolvedMode { mode: 32, limit: 32 });
        let sin = FourierSpec {
            mean: 0.0,
            cos: vec![],
            sin: vec![0.5],
        };
        let e = build_seed(&b, &cfg(sin, FourierSpec::default(), vec![0.0])).unwrap_err();
        assert!(matches!(e, Error::ParityViolation(_)));
    }

    #[test]
    fn coefficient_examples() {
        let b = bg();
        let s = build_seed(&b, &cfg(FourierSpec::constant(3f64.sqrt()), FourierSpec::default(), vec![1.0])).unwrap();
        let c = coefficients(&b, &s).unwrap();
        assert!(c.rpsi.sup_dist(&b.constant(2.0)) < 1e-14);
        assert!(c.btaupsi.sup_norm() < 1e-14);

        let a = 0.7;
        let s = build_seed(&b, &cfg(FourierSpec::constant(0.0), FourierSpec::cosines(0.0, vec![a]), vec![0.0])).unwrap();
        let c = coefficients(&b, &s).unwrap();
        let exact = b.field_from_fn(Parity::Even, |t| 2.0 - a * a * t.sin().powi(2));
        assert!(c.rpsi.sup_dist(&exact) < 1e-12);
        assert_relative_eq!(c.rpsi.min(), 2.0 - a * a, max_relative = 1e-12);

        let s = build_seed(&b, &cfg(FourierSpec::constant(0.0), FourierSpec::default(), vec![-1.0])).unwrap();
        let c = coefficients(&b, &s).unwrap();
        assert!(c.btaupsi.sup_dist(&b.constant(-2.0)) < 1e-15);
        assert!(c.b_minus.sup_dist(&b.constant(-2.0)) < 1e-15);
        assert_eq!(c.b_plus.sup_norm(), 0.0);
        assert_eq!(c.sup_abs_b, 2.0);
    }

    #[test]
    fn potential_eval_and_derivative() {
        let v = Potential::new(vec![0.1, 0.0, 0.05, 2.0]).unwrap();
        assert_relative_eq!(v.eval(2.0), 0.1 + 0.2 + 16.0);
        assert_relative_eq!(v.derivative(2.0), 0.2 + 24.0);
        assert!(Potential::new(vec![1.0; 10]).is_err());
    }

    #[test]
    fn validation_cases() {
        let b = bg();
        let ok = build_seed(&b, &cfg(FourierSpec::constant(1.0), FourierSpec::default(), vec![0.0])).unwrap();
        let r = validate(&b, &ok);
        assert!(r.passed);
        assert_eq!(r.coercivity, Coercivity::ByPositivity);

        let big = build_seed(&b, &cfg(FourierSpec::constant(1.0), FourierSpec::cosines(0.0, vec![2.0]), vec![0.0])).unwrap();
        let r = validate(&b, &big);
        assert_relative_eq!(r.min_rpsi, -2.0, max_relative = 1e-10);
        // Outcome decided by the eigenvalue, never by a panic.
        assert_eq!(r.passed, r.lambda_min_h > 0.0);
        if !r.passed {
            assert!(r.failures.iter().any(|f| f.contains("coercivity violated")));
        } else {
            assert_eq!(r.coercivity, Coercivity::ByEigenvalue);
        }

        let mut odd = ok.clone();
        odd.tau.parity = Parity::Odd;
        let r = validate(&b, &odd);
        assert!(!r.passed && !r.parity_ok);
        assert!(r.failures[0].contains("parity"));
    }

    #[test]
    fn deterministic_build() {
        let b = bg();
        let c = SeedConfig::benchmark();
        let s1 = coefficients(&b, &build_seed(&b, &c).unwrap()).unwrap();
        let s2 = coefficients(&b, &build_seed(&b, &c).unwrap()).unwrap();
        for (x, y) in s1.btaupsi.samples.iter().zip(&s2.btaupsi.samples) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
