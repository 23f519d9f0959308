//! Numerical estimation of Sobolev-type constants
//!
//! ```text
//! inf_u  w uᵀ A u / ‖u‖²_{L^N}
//! ```
//!
//! by projected, preconditioned gradient descent on the unit L^N sphere from
//! several starts. The result is the best value found, hence an upper bound
//! on the true infimum.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Field, ReducedBackground, N_CRIT};
use crate::parallel::{self, Execution};

#[derive(Debug, Clone)]
pub struct QuotientOptions {
    pub random_starts: usize,
    pub rng_seed: u64,
    /// Restrict to mean-free trial functions (kernel of a pure-gradient form).
    pub zero_mean: bool,
    pub max_iter: usize,
    /// Highest Fourier mode in the random starts.
    pub start_modes: usize,
    pub exec: Execution,
}

impl Default for QuotientOptions {
    fn default() -> Self {
        QuotientOptions {
            random_starts: 16,
            rng_seed: 0x5eed,
            zero_mean: false,
            max_iter: 300,
            start_modes: 8,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuotientMin {
    pub value: f64,
    pub trial: String,
    pub minimizer: Vec<f64>,
    /// Best value per trial, in trial order.
    pub per_trial: Vec<(String, f64)>,
}

struct Problem<'a> {
    op: &'a DMatrix<f64>,
    precond: Cholesky<f64, Dyn>,
    weight: f64,
    zero_mean: bool,
}

impl Problem<'_> {
    fn value(&self, u: &DVector<f64>) -> f64 {
        let num = self.weight * u.dot(&(self.op * u));
        let s: f64 = self.weight * u.iter().map(|x| x.abs().powf(N_CRIT)).sum::<f64>();
        num / s.powf(2.0 / N_CRIT)
    }

    fn gradient(&self, u: &DVector<f64>) -> (f64, DVector<f64>) {
        let au = self.op * u;
        let num = self.weight * u.dot(&au);
        let s: f64 = self.weight * u.iter().map(|x| x.abs().powf(N_CRIT)).sum::<f64>();
        let den = s.powf(2.0 / N_CRIT);
        let grad_num = au * (2.0 * self.weight);
        // d/du (S^{2/N}) = 2 w |u|^{N-2} u S^{2/N - 1}
        let grad_den = u.map(|x| x.abs().powf(N_CRIT - 2.0) * x)
            * (2.0 * self.weight * s.powf(2.0 / N_CRIT - 1.0));
        let g = (grad_num * den - grad_den * num) / (den * den);
        (num / den, g)
    }

    fn project(&self, u: &mut DVector<f64>) {
        if self.zero_mean {
            let mean = u.mean();
            u.add_scalar_mut(-mean);
        }
        let s: f64 = self.weight * u.iter().map(|x| x.abs().powf(N_CRIT)).sum::<f64>();
        if s > 0.0 {
            *u /= s.powf(1.0 / N_CRIT);
        }
    }

    fn descend(&self, start: &[f64], max_iter: usize) -> (f64, DVector<f64>) {
        let mut u = DVector::from_column_slice(start);
        self.project(&mut u);
        let mut q = self.value(&u);
        if !q.is_finite() {
            return (f64::INFINITY, u);
        }
        let mut step: f64 = 1.0;
        let mut quiet = 0;
        for _ in 0..max_iter {
            let (_, g) = self.gradient(&u);
            let mut d = -self.precond.solve(&g);
            if self.zero_mean {
                let mean = d.mean();
                d.add_scalar_mut(-mean);
            }
            let slope = g.dot(&d);
            if slope >= 0.0 || !slope.is_finite() {
                break;
            }
            let mut t = (step * 2.0).min(1.0);
            let mut accepted = None;
            for _ in 0..50 {
                let mut trial = &u + &d * t;
                self.project(&mut trial);
                let qt = self.value(&trial);
                if qt.is_finite() && qt <= q + 1e-4 * t * slope {
                    accepted = Some((trial, qt));
                    break;
                }
                t *= 0.5;
            }
            let Some((next, qn)) = accepted else { break };
            step = t;
            let decrease = q - qn;
            u = next;
            q = qn;
            if decrease <= 1e-14 * q.abs() {
                quiet += 1;
                if quiet >= 3 {
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        (q, u)
    }
}

/// Random band-limited start: mean plus modes 1..=kmax with 1/k decay.
fn random_start(bg: &ReducedBackground, rng: &mut ChaCha8Rng, kmax: usize, mean: f64) -> Vec<f64> {
    let coeffs: Vec<(f64, f64)> = (1..=kmax)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    bg.nodes()
        .iter()
        .map(|&t| {
            mean + coeffs
                .iter()
                .enumerate()
                .map(|(i, (a, b))| {
                    let w = bg.mode_frequency(i + 1) * t;
                    (a * w.cos() + b * w.sin()) / (i + 1) as f64
                })
                .sum::<f64>()
        })
        .collect()
}

pub fn minimize_quotient(
    bg: &ReducedBackground,
    op: &DMatrix<f64>,
    opts: &QuotientOptions,
) -> Result<QuotientMin> {
    minimize_quotient_with_trials(bg, op, opts, &[])
}

/// As [`minimize_quotient`], with additional caller-supplied starting trials.
pub fn minimize_quotient_with_trials(
    bg: &ReducedBackground,
    op: &DMatrix<f64>,
    opts: &QuotientOptions,
    extra: &[(String, Field)],
) -> Result<QuotientMin> {
    let m = bg.m();
    let mut shifted = op.clone();
    if opts.zero_mean {
        shifted.add_scalar_mut(1.0 / m as f64);
    }
    let precond = Cholesky::new(shifted).ok_or(Error::NotCoercive {
        lambda_min: f64::NAN,
    })?;
    let problem = Problem {
        op,
        precond,
        weight: bg.weight,
        zero_mean: opts.zero_mean,
    };

    let mut trials: Vec<(String, Vec<f64>)> = Vec::new();
    if opts.zero_mean {
        let w = bg.mode_frequency(1);
        trials.push(("sin1".into(), bg.nodes().iter().map(|&t| (w * t).sin()).collect()));
    } else {
        trials.push(("constant".into(), vec![1.0; m]));
    }
    for (label, f) in extra {
        trials.push((label.clone(), f.samples.clone()));
    }
    let mean = if opts.zero_mean { 0.0 } else { 1.5 };
    for i in 0..opts.random_starts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed.wrapping_add(i as u64));
        trials.push((
            format!("random{i}"),
            random_start(bg, &mut rng, opts.start_modes, mean),
        ));
    }

    let results = parallel::map_slice(opts.exec, &trials, |(_, start)| {
        problem.descend(start, opts.max_iter)
    });
    let per_trial: Vec<(String, f64)> = trials
        .iter()
        .zip(&results)
        .map(|((l, _), (q, _))| (l.clone(), *q))
        .collect();
    // First index wins ties, independent of execution order.
    let (best, _) = results
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bq), (i, (q, _))| {
            if *q < bq {
                (i, *q)
            } else {
                (bi, bq)
            }
        });
    Ok(QuotientMin {
        value: results[best].0,
        trial: trials[best].0.clone(),
        minimizer: results[best].1.iter().copied().collect(),
        per_trial,
    })
}
