//! Reduced background geometry: the product S¹(L) × S²(1) with every field
//! invariant under the sphere rotations, so each field is a periodic function
//! of the circle coordinate θ ∈ [0, L).
//!
//! Differentiation is Fourier collocation on the uniform grid θ_j = jL/M.
//! The first derivative drops the Nyquist mode (its sign is ambiguous for
//! real data); the Laplacian keeps the full symbol κ² including Nyquist, so
//! that the discrete operator 8Δ + ℛ has no spurious low-energy mode. For
//! band-limited fields (no Nyquist content) `deriv(deriv(u)) == -laplacian(u)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::sobolev::{self, QuotientOptions};

/// Spatial dimension of the background.
pub const DIM: usize = 3;
/// Critical Sobolev exponent N = 2n/(n-2).
pub const N_CRIT: f64 = 6.0;
/// Gradient coefficient of the conformal Laplacian, 4(n-1)/(n-2).
pub const H_COEFF: f64 = 8.0;
/// Gradient coefficient of the k-norm operator, (3n-2)/(n-1).
pub const K_COEFF: f64 = 3.5;
/// Scalar curvature of S¹ × S²(1).
pub const SCAL: f64 = 2.0;
/// Area of the unit 2-sphere.
pub const SPHERE_AREA: f64 = 4.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub num_points: usize,
    pub circle_length: f64,
}

impl GridSpec {
    pub fn new(num_points: usize, circle_length: f64) -> Result<Self> {
        let g = GridSpec {
            num_points,
            circle_length,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.num_points.is_multiple_of(2) {
            return Err(Error::InvalidGrid("M must be even".into()));
        }
        if self.num_points < 16 {
            return Err(Error::InvalidGrid(format!(
                "M must be at least 16, got {}",
                self.num_points
            )));
        }
        if !(self.circle_length.is_finite() && self.circle_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "L must be positive and finite, got {}",
                self.circle_length
            )));
        }
        Ok(())
    }
}

/// Behaviour under the reflection θ ↦ −θ (grid index j ↦ M − j mod M).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    None,
}

impl Parity {
    pub fn flip(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
            Parity::None => Parity::None,
        }
    }

    /// Parity of a pointwise product.
    pub fn product(self, other: Parity) -> Parity {
        match (self, other) {
            (Parity::None, _) | (_, Parity::None) => Parity::None,
            (a, b) if a == b => Parity::Even,
            _ => Parity::Odd,
        }
    }
}

/// Samples of a θ-dependent function on the uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub samples: Vec<f64>,
    pub parity: Parity,
}

impl Field {
    pub fn new(samples: Vec<f64>, parity: Parity) -> Self {
        Field { samples, parity }
    }

    pub fn untagged(samples: Vec<f64>) -> Self {
        Field::new(samples, Parity::None)
    }

    pub fn constant(m: usize, c: f64) -> Self {
        Field::new(vec![c; m], Parity::Even)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::new(self.samples.iter().map(|&x| f(x)).collect(), self.parity)
    }

    /// Pointwise combination; the caller supplies the resulting parity.
    pub fn zip_map(&self, other: &Field, parity: Parity, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.len(), other.len());
        Field::new(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            parity,
        )
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|x| c * x)
    }

    pub fn add(&self, other: &Field) -> Field {
        let parity = if self.parity == other.parity {
            self.parity
        } else {
            Parity::None
        };
        self.zip_map(other, parity, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        let parity = if self.parity == other.parity {
            self.parity
        } else {
            Parity::None
        };
        self.zip_map(other, parity, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Field {
        self.zip_map(other, self.parity.product(other.parity), |a, b| a * b)
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    pub fn sup_dist(&self, other: &Field) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .fold(0.0, |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.len() as f64
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.samples)
    }

    /// Largest violation of the declared parity.
    pub fn parity_defect(&self) -> f64 {
        let m = self.len();
        match self.parity {
            Parity::None => 0.0,
            Parity::Even => (0..m)
                .map(|j| (self.samples[j] - self.samples[(m - j) % m]).abs())
                .fold(0.0, f64::max),
            Parity::Odd => {
                let sym = (0..m)
                    .map(|j| (self.samples[j] + self.samples[(m - j) % m]).abs())
                    .fold(0.0, f64::max);
                sym.max(self.samples[0].abs()).max(self.samples[m / 2].abs())
            }
        }
    }

    pub fn check_parity(&self, tol: f64) -> Result<()> {
        let d = self.parity_defect();
        if d > tol {
            Err(Error::ParityViolation(format!(
                "{:?} field deviates by {d:.3e}",
                self.parity
            )))
        } else {
            Ok(())
        }
    }
}

/// The discretized S¹(L) × S²(1) background.
#[derive(Clone)]
pub struct ReducedBackground {
    pub grid: GridSpec,
    pub scal: f64,
    pub sphere_area: f64,
    pub volume: f64,
    /// Manifold quadrature weight per node: sphere area × L/M.
    pub weight: f64,
    nodes: Vec<f64>,
    wavenumbers: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    laplacian_matrix: DMatrix<f64>,
    deriv_matrix: DMatrix<f64>,
}

impl fmt::Debug for ReducedBackground {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReducedBackground")
            .field("grid", &self.grid)
            .field("volume", &self.volume)
            .finish()
    }
}

pub fn build_background(grid: GridSpec) -> Result<ReducedBackground> {
    grid.validate()?;
    let m = grid.num_points;
    let l = grid.circle_length;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    let ifft = planner.plan_fft_inverse(m);
    let wavenumbers = (0..m)
        .map(|k| {
            let signed = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
            2.0 * PI * signed / l
        })
        .collect();
    let mut bg = ReducedBackground {
        grid,
        scal: SCAL,
        sphere_area: SPHERE_AREA,
        volume: SPHERE_AREA * l,
        weight: SPHERE_AREA * l / m as f64,
        nodes: (0..m).map(|j| j as f64 * l / m as f64).collect(),
        wavenumbers,
        fft,
        ifft,
        laplacian_matrix: DMatrix::zeros(0, 0),
        deriv_matrix: DMatrix::zeros(0, 0),
    };
    let mut lap = DMatrix::zeros(m, m);
    let mut der = DMatrix::zeros(m, m);
    let mut e = vec![0.0; m];
    for j in 0..m {
        e[j] = 1.0;
        let lj = bg.apply_symbol(&e, Symbol::Laplacian);
        let dj = bg.apply_symbol(&e, Symbol::Derivative);
        lap.set_column(j, &DVector::from_vec(lj));
        der.set_column(j, &DVector::from_vec(dj));
        e[j] = 0.0;
    }
    // Circulant and symmetric in exact arithmetic; remove FFT round-off asymmetry.
    let lap_t = lap.transpose();
    bg.laplacian_matrix = (lap + lap_t) * 0.5;
    bg.deriv_matrix = der;
    Ok(bg)
}

#[derive(Clone, Copy)]
enum Symbol {
    Derivative,
    Laplacian,
    Identity,
    /// Pseudo-inverse of Δ: mode 0 is dropped.
    InverseLaplacian,
    /// Truncate to modes |k| < kmax.
    LowPass(usize),
}

impl ReducedBackground {
    pub fn m(&self) -> usize {
        self.grid.num_points
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Angular frequency 2πk/L of mode k.
    pub fn mode_frequency(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.grid.circle_length
    }

    pub fn field_from_fn(&self, parity: Parity, f: impl Fn(f64) -> f64) -> Field {
        Field::new(self.nodes.iter().map(|&t| f(t)).collect(), parity)
    }

    pub fn constant(&self, c: f64) -> Field {
        Field::constant(self.m(), c)
    }

    fn apply_symbol(&self, u: &[f64], symbol: Symbol) -> Vec<f64> {
        let m = self.m();
        let mut buf: Vec<Complex<f64>> = u.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.fft.process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            let kappa = self.wavenumbers[k];
            *c = match symbol {
                Symbol::Derivative if k == m / 2 => Complex::new(0.0, 0.0),
                Symbol::Derivative => *c * Complex::new(0.0, kappa),
                Symbol::Laplacian => *c * (kappa * kappa),
                Symbol::Identity => *c,
                Symbol::InverseLaplacian if k == 0 => Complex::new(0.0, 0.0),
                Symbol::InverseLaplacian => *c / (kappa * kappa),
                Symbol::LowPass(kmax) => {
                    let signed = if k <= m / 2 { k } else { m - k };
                    if signed < kmax {
                        *c
                    } else {
                        Complex::new(0.0, 0.0)
                    }
                }
            };
        }
        self.ifft.process(&mut buf);
        let scale = 1.0 / m as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    fn check_shape(&self, u: &Field) -> Result<()> {
        if u.len() != self.m() {
            Err(Error::ShapeMismatch {
                expected: self.m(),
                got: u.len(),
            })
        } else {
            Ok(())
        }
    }

    /// Spectral d/dθ. Flips the parity tag.
    pub fn deriv(&self, u: &Field) -> Result<Field> {
        self.check_shape(u)?;
        Ok(Field::new(
            self.apply_symbol(&u.samples, Symbol::Derivative),
            u.parity.flip(),
        ))
    }

    /// Δu = −u″ (positive-spectrum convention).
    pub fn laplacian(&self, u: &Field) -> Result<Field> {
        self.check_shape(u)?;
        Ok(Field::new(
            self.apply_symbol(&u.samples, Symbol::Laplacian),
            u.parity,
        ))
    }

    /// Mean-free v with Δv = u − mean(u).
    pub fn inverse_laplacian(&self, u: &Field) -> Result<Field> {
        self.check_shape(u)?;
        Ok(Field::new(
            self.apply_symbol(&u.samples, Symbol::InverseLaplacian),
            u.parity,
        ))
    }

    /// Projection onto modes |k| < kmax.
    pub fn low_pass(&self, u: &Field, kmax: usize) -> Result<Field> {
        self.check_shape(u)?;
        Ok(Field::new(
            self.apply_symbol(&u.samples, Symbol::LowPass(kmax)),
            u.parity,
        ))
    }

    /// Round trip through the transform; used to measure FFT round-off.
    pub fn spectral_identity(&self, u: &Field) -> Field {
        Field::new(self.apply_symbol(&u.samples, Symbol::Identity), u.parity)
    }

    /// ∫_M u dμ for sphere-invariant u: 4π times the periodic trapezoid rule.
    pub fn integrate(&self, u: &Field) -> Result<f64> {
        self.check_shape(u)?;
        Ok(self.weight * u.samples.iter().sum::<f64>())
    }

    pub fn integrate_slice(&self, u: &[f64]) -> f64 {
        self.weight * u.iter().sum::<f64>()
    }

    pub fn inner(&self, u: &Field, v: &Field) -> Result<f64> {
        self.check_shape(u)?;
        self.check_shape(v)?;
        Ok(self.weight
            * u.samples
                .iter()
                .zip(&v.samples)
                .map(|(a, b)| a * b)
                .sum::<f64>())
    }

    /// ‖u‖_{L^p(M)}, evaluated with the maximum factored out so that large
    /// exponents neither overflow nor underflow.
    pub fn lp_norm(&self, u: &Field, p: f64) -> f64 {
        let sup = u.sup_norm();
        if sup == 0.0 {
            return 0.0;
        }
        let s: f64 = u.samples.iter().map(|&x| (x.abs() / sup).powf(p)).sum();
        sup * (self.weight * s).powf(1.0 / p)
    }

    /// Components of 𝕃W for W = f dθ: the dθ⊗dθ coefficient and the
    /// coefficient of the unit-sphere metric block.
    pub fn lw_components(&self, f: &Field) -> Result<(Field, Field)> {
        let df = self.deriv(f)?;
        Ok((df.scale(4.0 / 3.0), df.scale(-2.0 / 3.0)))
    }

    /// |𝕃W|² = (4/3 f′)² + 2 (2/3 f′)² = (8/3)(f′)².
    pub fn lw_norm_sq(&self, f: &Field) -> Result<Field> {
        let df = self.deriv(f)?;
        Ok(df.mul(&df).scale(8.0 / 3.0))
    }

    /// The reduced vector Laplacian ∇^i 𝕃W_{iθ} = (4/3) f″ = −(4/3) Δf.
    pub fn vector_laplacian(&self, f: &Field) -> Result<Field> {
        Ok(self.laplacian(f)?.scale(-4.0 / 3.0))
    }

    fn quadratic_form(&self, coeff: f64, rpsi: &Field, u: &Field) -> Result<f64> {
        self.check_shape(rpsi)?;
        let lap = self.laplacian(u)?;
        Ok(self.weight
            * u.samples
                .iter()
                .zip(&lap.samples)
                .zip(&rpsi.samples)
                .map(|((&x, &lx), &r)| coeff * x * lx + r * x * x)
                .sum::<f64>())
    }

    /// ‖u‖²_h = ∫ (8|du|² + ℛ_ψ u²) dμ, evaluated as the quadratic form of
    /// the assembled operator.
    pub fn h_norm_sq(&self, rpsi: &Field, u: &Field) -> Result<f64> {
        self.quadratic_form(H_COEFF, rpsi, u)
    }

    /// ‖u‖²_k = ∫ ((7/2)|du|² + ℛ_ψ u²) dμ.
    pub fn k_norm_sq(&self, rpsi: &Field, u: &Field) -> Result<f64> {
        self.quadratic_form(K_COEFF, rpsi, u)
    }

    /// Dense Δ (symmetric positive semidefinite, circulant).
    pub fn laplacian_matrix(&self) -> &DMatrix<f64> {
        &self.laplacian_matrix
    }

    /// Dense d/dθ (antisymmetric, circulant).
    pub fn deriv_matrix(&self) -> &DMatrix<f64> {
        &self.deriv_matrix
    }

    /// coeff·Δ + diag(potential).
    pub fn operator_matrix(&self, coeff: f64, potential: &Field) -> DMatrix<f64> {
        let mut a = &self.laplacian_matrix * coeff;
        for (i, &p) in potential.samples.iter().enumerate() {
            a[(i, i)] += p;
        }
        a
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoercivityEstimate {
    pub lambda_min_h: f64,
    /// Upper-bound estimate of the best constant in ‖u‖²_h ≥ s‖u‖²_{L^N}.
    pub s_est: f64,
    /// Label of the trial that achieved `s_est`.
    pub s_trial: String,
    pub s_prime_est: f64,
    pub s_prime_trial: String,
    pub sup_abs_b: f64,
    pub r0: f64,
}

/// R0 = s^{1/2} (s / (2(N−1) sup|𝓑|))^{1/(N−2)}; infinite when 𝓑 ≡ 0.
pub fn ball_radius(s: f64, sup_abs_b: f64) -> f64 {
    if sup_abs_b <= 0.0 {
        return f64::INFINITY;
    }
    s.sqrt() * (s / (2.0 * (N_CRIT - 1.0) * sup_abs_b)).powf(1.0 / (N_CRIT - 2.0))
}

#[derive(Debug, Clone, Copy)]
pub struct CoercivityOptions {
    pub random_starts: usize,
    pub rng_seed: u64,
    pub exec: Execution,
}

impl Default for CoercivityOptions {
    fn default() -> Self {
        CoercivityOptions {
            random_starts: 16,
            rng_seed: 0x5eed,
            exec: Execution::default(),
        }
    }
}

pub fn estimate_coercivity(
    bg: &ReducedBackground,
    rpsi: &Field,
    btaupsi: &Field,
) -> Result<CoercivityEstimate> {
    estimate_coercivity_with(bg, rpsi, btaupsi, &CoercivityOptions::default())
}

pub fn estimate_coercivity_with(
    bg: &ReducedBackground,
    rpsi: &Field,
    btaupsi: &Field,
    opts: &CoercivityOptions,
) -> Result<CoercivityEstimate> {
    bg.check_shape(rpsi)?;
    bg.check_shape(btaupsi)?;
    let h_op = bg.operator_matrix(H_COEFF, rpsi);
    let lambda_min_h = min_eigenvalue(&h_op);
    if lambda_min_h <= 0.0 {
        return Err(Error::NotCoercive {
            lambda_min: lambda_min_h,
        });
    }
    let k_op = bg.operator_matrix(K_COEFF, rpsi);
    let qopts = QuotientOptions {
        random_starts: opts.random_starts,
        rng_seed: opts.rng_seed,
        zero_mean: false,
        exec: opts.exec,
        ..QuotientOptions::default()
    };
    let s = sobolev::minimize_quotient(bg, &h_op, &qopts)?;
    let sp = sobolev::minimize_quotient(bg, &k_op, &qopts)?;
    let sup_abs_b = btaupsi.sup_norm();
    Ok(CoercivityEstimate {
        lambda_min_h,
        s_est: s.value,
        s_trial: s.trial,
        s_prime_est: sp.value,
        s_prime_trial: sp.trial,
        sup_abs_b,
        r0: ball_radius(s.value, sup_abs_b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bg(m: usize, l: f64) -> ReducedBackground {
        build_background(GridSpec::new(m, l).unwrap()).unwrap()
    }

    #[test]
    fn volumes() {
        assert_relative_eq!(bg(64, 2.0 * PI).volume, 8.0 * PI * PI, max_relative = 1e-14);
        assert_relative_eq!(bg(256, 4.0).volume, 16.0 * PI, max_relative = 1e-14);
        let b = bg(64, 2.0 * PI);
        assert_relative_eq!(
            b.integrate(&b.constant(1.0)).unwrap(),
            4.0 * PI * 2.0 * PI,
            max_relative = 1e-12
        );
    }

    #[test]
    fn rejects_bad_grids() {
        let e = GridSpec::new(15, 1.0).unwrap_err();
        assert!(e.to_string().contains("M must be even"));
        assert!(GridSpec::new(8, 1.0).is_err());
        assert!(GridSpec::new(64, 0.0).is_err());
        assert!(GridSpec::new(64, f64::NAN).is_err());
    }

    #[test]
    fn derivative_of_resolved_modes_is_exact() {
        let b = bg(64, 2.0 * PI);
        for k in 1..32 {
            let kf = k as f64;
            let u = b.field_from_fn(Parity::Odd, |t| (kf * t).sin());
            let du = b.deriv(&u).unwrap();
            assert_eq!(du.parity, Parity::Even);
            let exact = b.field_from_fn(Parity::Even, |t| kf * (kf * t).cos());
            assert!(du.sup_dist(&exact) < 1e-12 * kf.max(1.0), "k={k}");
        }
        assert!(b.deriv(&b.constant(3.0)).unwrap().sup_norm() < 1e-13);
    }

    #[test]
    fn laplacian_examples() {
        let b = bg(64, 2.0 * PI);
        let u = b.field_from_fn(Parity::Even, f64::cos);
        assert!(b.laplacian(&u).unwrap().sup_dist(&u) < 1e-12);
        let u2 = b.field_from_fn(Parity::Even, |t| (2.0 * t).cos());
        assert!(b.laplacian(&u2).unwrap().sup_dist(&u2.scale(4.0)) < 1e-12);
        assert!(b.laplacian(&b.constant(5.0)).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn deriv_squared_is_minus_laplacian_on_band_limited() {
        let b = bg(64, 3.0);
        let u = b.field_from_fn(Parity::None, |t| (0.7 * (2.0 * PI * t / 3.0).cos()).exp());
        let u = b.low_pass(&u, 32).unwrap();
        let dd = b.deriv(&b.deriv(&u).unwrap()).unwrap();
        let lap = b.laplacian(&u).unwrap();
        assert!(dd.add(&lap).sup_norm() < 1e-10);
    }

    #[test]
    fn integrals() {
        let b = bg(64, 2.0 * PI);
        let s = b.field_from_fn(Parity::Odd, f64::sin);
        assert!(b.integrate(&s).unwrap().abs() < 1e-14);
        let s2 = b.field_from_fn(Parity::Even, |t| t.sin().powi(2));
        assert_relative_eq!(b.integrate(&s2).unwrap(), 4.0 * PI * PI, max_relative = 1e-13);
    }

    #[test]
    fn lw_examples() {
        let b = bg(64, 2.0 * PI);
        let (lt, ls) = b.lw_components(&b.constant(1.3)).unwrap();
        assert!(lt.sup_norm() < 1e-13 && ls.sup_norm() < 1e-13);
        let f = b.field_from_fn(Parity::Odd, f64::sin);
        let (lt, ls) = b.lw_components(&f).unwrap();
        let c = b.field_from_fn(Parity::Even, f64::cos);
        assert!(lt.sup_dist(&c.scale(4.0 / 3.0)) < 1e-12);
        assert!(ls.sup_dist(&c.scale(-2.0 / 3.0)) < 1e-12);
        let n = b.lw_norm_sq(&f).unwrap();
        let exact = b.field_from_fn(Parity::Even, |t| 8.0 / 3.0 * t.cos().powi(2));
        assert!(n.sup_dist(&exact) < 1e-12);
        // trace-free: ltheta + 2 lsphere = 0
        assert!(lt.add(&ls.scale(2.0)).sup_norm() < 1e-13);
    }

    #[test]
    fn norm_examples() {
        let b = bg(64, 2.0 * PI);
        let two = b.constant(2.0);
        let zero = b.constant(0.0);
        let one = b.constant(1.0);
        let s = b.field_from_fn(Parity::Odd, f64::sin);
        let pi2 = PI * PI;
        assert_relative_eq!(b.h_norm_sq(&two, &one).unwrap(), 16.0 * pi2, max_relative = 1e-12);
        assert_relative_eq!(b.h_norm_sq(&zero, &s).unwrap(), 32.0 * pi2, max_relative = 1e-12);
        assert_relative_eq!(b.k_norm_sq(&two, &one).unwrap(), 16.0 * pi2, max_relative = 1e-12);
        assert_relative_eq!(b.k_norm_sq(&zero, &s).unwrap(), 14.0 * pi2, max_relative = 1e-12);
        let ratio = b.k_norm_sq(&zero, &s).unwrap() / b.h_norm_sq(&zero, &s).unwrap();
        assert_relative_eq!(ratio, 7.0 / 16.0, max_relative = 1e-12);
    }

    #[test]
    fn r0_arithmetic() {
        assert_relative_eq!(ball_radius(36.0, 1.0), 6.0 * 3.6f64.powf(0.25), max_relative = 1e-14);
        assert_relative_eq!(ball_radius(36.0, 1.0), 8.262, epsilon = 3e-3);
        assert!(ball_radius(36.0, 0.0).is_infinite());
    }

    #[test]
    fn coercivity_flat_case() {
        let b = bg(64, 2.0 * PI);
        let est = estimate_coercivity(&b, &b.constant(2.0), &b.constant(1.0)).unwrap();
        assert_relative_eq!(est.lambda_min_h, 2.0, max_relative = 1e-10);
        let constant_trial = 2.0 * (8.0 * PI * PI).powf(2.0 / 3.0);
        assert!(est.s_est <= constant_trial + 1e-9, "{}", est.s_est);
        assert!(est.s_est > 0.0 && est.s_prime_est > 0.0);
        assert_relative_eq!(est.r0, ball_radius(est.s_est, 1.0));
    }

    #[test]
    fn coercivity_violation_is_reported() {
        let b = bg(32, 2.0 * PI);
        let err = estimate_coercivity(&b, &b.constant(-1.0), &b.constant(0.0)).unwrap_err();
        assert!(matches!(err, Error::NotCoercive { .. }));
    }

    #[test]
    fn parity_checks() {
        let b = bg(32, 2.0 * PI);
        assert!(b.field_from_fn(Parity::Even, f64::cos).check_parity(1e-12).is_ok());
        assert!(b.field_from_fn(Parity::Odd, f64::sin).check_parity(1e-12).is_ok());
        assert!(b.field_from_fn(Parity::Even, f64::sin).check_parity(1e-12).is_err());
        assert!(b.field_from_fn(Parity::Odd, |t| t.sin() + 0.1).check_parity(1e-12).is_err());
    }
}
