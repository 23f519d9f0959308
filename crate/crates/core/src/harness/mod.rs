//! Config-driven runs: each mode builds the pipeline, checks its invariants
//! and produces a JSON report plus CSV traces.

pub mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::certificates::certify;
use crate::continuation::{continue_family, rescale, ContinuationOptions};
use crate::coupled::{decoupled_solve, solve_coupled, stable_set_params, CoupledInit, CoupledOptions, CoupledRun};
use crate::error::{Error, Result};
use crate::geometry::{build_background, estimate_coercivity_with, CoercivityEstimate, CoercivityOptions, Field, ReducedBackground};
use crate::lichnerowicz::{momentum_density, LichOptions};
use crate::momentum::{estimate_gamma, OBSTRUCTION_TOL};
use crate::parallel;
use crate::reconstruction::{conformal_residuals, physical_residuals, reconstruct, residual_report};
use crate::seed::{build_seed, coefficients, validate, SeedData};
use crate::sobolev::QuotientOptions;

pub use config::{Mode, RunConfig, SweepParameter};

pub const TOOL: &str = "conformal";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Disagreement between the continuation and fixed-point pipelines that
/// gets flagged.
pub const COMPARE_FLAG_TOL: f64 = 1e-5;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invariant {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
    /// Advisory checks only fail the run under `strict`.
    pub asserted: bool,
}

impl Invariant {
    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Invariant {
            name: name.into(),
            value,
            bound,
            // NaN fails.
            passed: value <= bound,
            asserted: true,
        }
    }

    fn holds(name: &str, ok: bool) -> Self {
        Invariant {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            bound: 1.0,
            passed: ok,
            asserted: true,
        }
    }

    fn advisory(mut self) -> Self {
        self.asserted = false;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorInfo {
    /// "config", "regime" or "io".
    pub class: String,
    pub variant: String,
    pub message: String,
    pub key: Option<String>,
}

impl ErrorInfo {
    fn from_error(e: &Error) -> Self {
        let debug = format!("{e:?}");
        let variant = debug
            .split(['{', '(', ' '])
            .next()
            .unwrap_or_default()
            .to_string();
        let (class, key) = match e {
            Error::Config { key, .. } => ("config", Some(key.clone())),
            Error::Io(_) => ("io", None),
            _ if e.is_regime_failure() => ("regime", None),
            _ => ("contract", None),
        };
        ErrorInfo {
            class: class.into(),
            variant,
            message: e.to_string(),
            key,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub versions: BTreeMap<String, String>,
    pub config_hash: Option<String>,
    pub mode: Option<Mode>,
    pub strict: bool,
    pub status: Status,
    pub exit_code: i32,
    pub error: Option<ErrorInfo>,
    pub invariants: Vec<Invariant>,
    pub result: Value,
}

impl Report {
    pub fn invariant(&self, name: &str) -> Option<&Invariant> {
        self.invariants.iter().find(|i| i.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Report plus CSV traces keyed by file name.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub traces: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code
    }

    pub fn trace(&self, name: &str) -> Option<&[u8]> {
        self.traces.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Writes `report.json` and the traces into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let io = |e: std::io::Error| Error::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut written = Vec::new();
        let path = dir.join("report.json");
        std::fs::write(&path, self.report.to_json()).map_err(io)?;
        written.push(path);
        for (name, bytes) in &self.traces {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(io)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([("conformal-core".to_string(), VERSION.to_string())])
}

/// Report for a config that could not be loaded.
pub fn config_failure(err: &Error) -> RunOutput {
    RunOutput {
        report: Report {
            tool: TOOL.into(),
            version: VERSION.into(),
            versions: versions(),
            config_hash: None,
            mode: None,
            strict: false,
            status: Status::Error,
            exit_code: EXIT_CONFIG,
            error: Some(ErrorInfo::from_error(err)),
            invariants: Vec::new(),
            result: Value::Null,
        },
        traces: Vec::new(),
    }
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

/// Everything shared by the modes: background, seed and the estimates that
/// only depend on (τ, ψ, V).
#[derive(Clone)]
pub struct Pipeline {
    pub bg: ReducedBackground,
    pub seed: SeedData,
    pub estimate: CoercivityEstimate,
    pub gamma: f64,
    config: RunConfig,
}

fn setup_error(key: &str, e: Error) -> Error {
    match e {
        Error::Config { .. } => e,
        Error::InvalidGrid(_) | Error::ParityViolation(_) | Error::UnresolvedMode { .. } => Error::Config {
            key: key.into(),
            message: e.to_string(),
        },
        other => other,
    }
}

impl Pipeline {
    pub fn new(config: &RunConfig) -> Result<Pipeline> {
        let bg = build_background(config.grid_spec()).map_err(|e| setup_error("grid", e))?;
        let seed = build_seed(&bg, &config.seed).map_err(|e| setup_error("seed", e))?;
        let report = validate(&bg, &seed);
        if !report.passed {
            return Err(Error::NotCoercive {
                lambda_min: report.lambda_min_h,
            });
        }
        let coeffs = coefficients(&bg, &seed)?;
        let estimate = estimate_coercivity_with(
            &bg,
            &coeffs.rpsi,
            &coeffs.btaupsi,
            &CoercivityOptions {
                random_starts: config.solver.random_starts,
                rng_seed: config.rng_seed,
                exec: config.execution(),
            },
        )?;
        let gamma = estimate_gamma(
            &bg,
            &QuotientOptions {
                zero_mean: true,
                ..quotient_options(config)
            },
        )?
        .value;
        Ok(Pipeline {
            bg,
            seed,
            estimate,
            gamma,
            config: config.clone(),
        })
    }

    /// Same background and estimates with other (σ, π) data.
    pub fn with_seed(&self, seed: SeedData) -> Pipeline {
        Pipeline { seed, ..self.clone() }
    }

    pub fn lich_options(&self) -> LichOptions {
        let s = &self.config.solver;
        LichOptions {
            pde_tol: s.pde_tol,
            eps_levels: s.eps_levels,
            max_newton: s.max_newton,
            ..LichOptions::default()
        }
    }

    pub fn coupled_options(&self) -> CoupledOptions {
        let s = &self.config.solver;
        CoupledOptions {
            delta_tol: s.picard_tol,
            max_iter: s.picard_max_iter,
            residual_tol: s.residual_tol,
            strict_momentum: self.config.momentum.strict,
            lich: LichOptions {
                check_stability: false,
                ..self.lich_options()
            },
        }
    }

    pub fn continuation_options(&self) -> ContinuationOptions {
        let c = &self.config.continuation;
        ContinuationOptions {
            newton_tol: c.newton_tol,
            min_step: c.min_step,
            strict_momentum: self.config.momentum.strict,
            ..ContinuationOptions::default()
        }
    }

    pub fn coupled_for(&self, seed: &SeedData) -> Result<CoupledRun> {
        let params = stable_set_params(&self.bg, seed, &self.estimate, self.gamma)?;
        solve_coupled(&self.bg, seed, &self.estimate, &params, &CoupledInit::Auto, &self.coupled_options())
    }

    pub fn coupled(&self) -> Result<CoupledRun> {
        self.coupled_for(&self.seed)
    }
}

fn quotient_options(config: &RunConfig) -> QuotientOptions {
    QuotientOptions {
        random_starts: config.solver.random_starts,
        rng_seed: config.rng_seed,
        exec: config.execution(),
        ..QuotientOptions::default()
    }
}

/// Largest violation of φ_sub ≤ φ ≤ φ_sup; ≤ 0 means bracketed.
fn bracket_violation(lower: &Field, phi: &Field, upper: &Field) -> f64 {
    phi.samples
        .iter()
        .zip(&lower.samples)
        .zip(&upper.samples)
        .map(|((&p, &lo), &hi)| (lo - p).max(p - hi))
        .fold(f64::NEG_INFINITY, f64::max)
}

struct ModeOutput {
    invariants: Vec<Invariant>,
    result: Value,
    traces: Vec<(String, Vec<u8>)>,
}

/// Runs the configured mode. Never panics on solver failure; errors end up
/// in the report.
pub fn execute(config: &RunConfig) -> RunOutput {
    let outcome = Pipeline::new(config).and_then(|p| match config.mode {
        Mode::Lichnerowicz => run_lichnerowicz(&p),
        Mode::Coupled => run_coupled(&p),
        Mode::Continuation => run_continuation(&p),
        Mode::Certify => run_certify(&p),
        Mode::Sweep => run_sweep(&p),
        Mode::Residuals => run_residuals(&p),
        Mode::Compare => run_compare(&p),
    });
    let mut report = Report {
        tool: TOOL.into(),
        version: VERSION.into(),
        versions: versions(),
        config_hash: Some(config.hash()),
        mode: Some(config.mode),
        strict: config.strict,
        status: Status::Pass,
        exit_code: EXIT_PASS,
        error: None,
        invariants: Vec::new(),
        result: Value::Null,
    };
    let traces = match outcome {
        Ok(out) => {
            (report.status, report.exit_code) = verdict(&out.invariants, config.strict);
            report.invariants = out.invariants;
            report.result = out.result;
            out.traces
        }
        Err(e) => {
            let info = ErrorInfo::from_error(&e);
            report.exit_code = if info.class == "config" { EXIT_CONFIG } else { EXIT_FAILURE };
            report.status = Status::Error;
            report.error = Some(info);
            Vec::new()
        }
    };
    RunOutput { report, traces }
}

fn verdict(invariants: &[Invariant], strict: bool) -> (Status, i32) {
    if invariants.iter().any(|i| !i.passed && (i.asserted || strict)) {
        (Status::Fail, EXIT_FAILURE)
    } else {
        (Status::Pass, EXIT_PASS)
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub strict: bool,
    pub out: Option<PathBuf>,
}

/// Loads, runs and writes; returns the output and the directory written to.
pub fn run_path(path: &Path, overrides: &Overrides) -> (RunOutput, PathBuf) {
    let fallback_dir = overrides.out.clone().unwrap_or_else(|| PathBuf::from(config::OutputConfig::default().dir));
    let mut config = match RunConfig::load(path) {
        Ok(c) => c,
        Err(e) => return (config_failure(&e), fallback_dir),
    };
    if let Some(mode) = overrides.mode {
        config.mode = mode;
    }
    config.strict |= overrides.strict;
    let out_dir = overrides.out.clone().unwrap_or_else(|| PathBuf::from(&config.output.dir));
    let output = match config.validate() {
        Ok(()) => execute(&config),
        Err(e) => config_failure(&e),
    };
    (output, out_dir)
}

fn run_lichnerowicz(p: &Pipeline) -> Result<ModeOutput> {
    let sol = decoupled_solve(&p.bg, &p.seed, &p.estimate, &p.lich_options())?;
    let invariants = vec![
        Invariant::at_most("residual_sup", sol.residual_sup, p.config.solver.pde_tol),
        Invariant::at_most("bracketing", bracket_violation(&sol.phi_sub, &sol.phi, &sol.phi_sup), 0.0),
        Invariant::at_most("energy_in_ball", sol.energy_h.sqrt(), sol.r0),
        Invariant::holds("stable", sol.stable),
    ];
    let result = json!({
        "phi_const": sol.phi.mean(),
        "phi_min": sol.phi.min(),
        "phi_max": sol.phi.max(),
        "energy_h": sol.energy_h,
        "energy_constant": sol.energy_constant,
        "functional_value": sol.functional_value,
        "residual_sup": sol.residual_sup,
        "hessian_min_eig": sol.hessian_min_eig,
        "iterations": sol.iterations,
        "eps_schedule": sol.eps_schedule,
        "stage_deltas": sol.stage_deltas,
        "supersolution": sol.supersolution_kind,
        "subsolution_theta": sol.subsolution.theta,
        "estimate": p.estimate,
        "phi": sol.phi.samples,
    });
    Ok(ModeOutput {
        invariants,
        result,
        traces: Vec::new(),
    })
}

fn coupled_invariants(p: &Pipeline, run: &CoupledRun) -> Vec<Invariant> {
    let tol = p.config.solver.residual_tol;
    let s = &run.state;
    vec![
        Invariant::at_most("residual_lich", s.residual_lich, tol),
        Invariant::at_most("residual_vec", s.residual_vec, tol),
        Invariant::at_most("obstruction", s.obstruction, OBSTRUCTION_TOL),
        Invariant::at_most(
            "bracketing",
            bracket_violation(&run.lich.phi_sub, &s.phi, &run.lich.phi_sup),
            0.0,
        ),
        Invariant::at_most("stable_set_feasible", run.params.f_of_r, run.params.r).advisory(),
        Invariant::holds("iterates_in_stable_set", run.all_in_c).advisory(),
    ]
}

fn coupled_summary(p: &Pipeline, run: &CoupledRun) -> Value {
    json!({
        "iterations": run.state.iter,
        "delta": run.state.delta,
        "residual_lich": run.state.residual_lich,
        "residual_vec": run.state.residual_vec,
        "obstruction": run.state.obstruction,
        "energy_h": run.state.energy_h,
        "y": run.state.y,
        "all_in_c": run.all_in_c,
        "data_size": run.data_size,
        "stable_set": run.params,
        "estimate": p.estimate,
        "gamma": p.gamma,
        "phi_min": run.state.phi.min(),
        "phi_max": run.state.phi.max(),
        "f_sup": run.state.f.sup_norm(),
        "phi": run.state.phi.samples,
        "f": run.state.f.samples,
    })
}

fn run_coupled(p: &Pipeline) -> Result<ModeOutput> {
    let run = p.coupled()?;
    Ok(ModeOutput {
        invariants: coupled_invariants(p, &run),
        result: coupled_summary(p, &run),
        traces: vec![("coupled_trace.csv".into(), csv_bytes(&run.trace)?)],
    })
}

#[derive(Serialize)]
struct BranchRow {
    lambda: f64,
    min_sv: f64,
    newton_iters: usize,
    energy_h: f64,
    epsilon: f64,
}

fn run_continuation(p: &Pipeline) -> Result<ModeOutput> {
    let c = &p.config.continuation;
    let branch = continue_family(&p.bg, &p.seed, &p.estimate, c.lambda_max, c.num_steps, &p.continuation_options())?;
    let last = branch.states.last().expect("branch starts at lambda = 0");
    let rescaled = rescale(&p.bg, &p.seed, last)?;
    let min_sv = branch
        .states
        .iter()
        .map(|s| s.jacobian_min_sv)
        .fold(f64::INFINITY, f64::min);
    let rows: Vec<BranchRow> = branch
        .states
        .iter()
        .map(|s| BranchRow {
            lambda: s.lambda,
            min_sv: s.jacobian_min_sv,
            newton_iters: s.newton_iters,
            energy_h: s.energy_h,
            epsilon: s.lambda * s.lambda,
        })
        .collect();
    let tol = p.config.solver.residual_tol;
    let invariants = vec![
        Invariant::at_most("lambda_shortfall", c.lambda_max - branch.lambda_reached, 0.0),
        Invariant::at_most("rescaled_residual_lich", rescaled.residual_lich, tol),
        Invariant::at_most("rescaled_residual_vec", rescaled.residual_vec, tol),
    ];
    let result = json!({
        "lambda_reached": branch.lambda_reached,
        "stalled_at": branch.stalled_at,
        "min_singular_value": min_sv,
        "steps": branch.states.len() - 1,
        "rescaled": {
            "lambda": rescaled.lambda,
            "epsilon": rescaled.epsilon,
            "residual_lich": rescaled.residual_lich,
            "residual_vec": rescaled.residual_vec,
            "phi": rescaled.phi.samples,
            "f": rescaled.f.samples,
        },
        "estimate": p.estimate,
    });
    Ok(ModeOutput {
        invariants,
        result,
        traces: vec![("branch.csv".into(), csv_bytes(&rows)?)],
    })
}

fn run_certify(p: &Pipeline) -> Result<ModeOutput> {
    let run = p.coupled()?;
    let cert = certify(&p.bg, &p.seed, &run, p.config.certify.depth, &quotient_options(&p.config))?;
    let mut invariants = coupled_invariants(p, &run);
    invariants.extend(cert.audits.iter().map(|a| Invariant::at_most(&a.name, a.value, a.bound)));
    let result = json!({
        "chain": cert.chain,
        "lower_bound": cert.lower,
        "audits": cert.audits,
        "coupled": coupled_summary(p, &run),
    });
    Ok(ModeOutput {
        invariants,
        result,
        traces: vec![("coupled_trace.csv".into(), csv_bytes(&run.trace)?)],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub integral_a: f64,
    pub energy_h: f64,
    pub converged: bool,
    pub r_feasible: bool,
    pub error: String,
}

/// Least-squares slope of ln y against ln x over positive pairs.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn sweep_point(p: &Pipeline, parameter: SweepParameter, value: f64) -> SweepRow {
    let seed = match parameter {
        SweepParameter::SigmaAmp => SeedData {
            sigma_amp: value,
            ..p.seed.clone()
        },
        SweepParameter::TtScale => p.seed.with_scaled_tt_data(value),
    };
    let feasible = stable_set_params(&p.bg, &seed, &p.estimate, p.gamma).map(|s| s.feasible);
    let solved = p.coupled_for(&seed).and_then(|run| {
        let density = momentum_density(&p.bg, &seed, &run.state.f)?;
        Ok((density.integral_a, run.state.energy_h))
    });
    let (integral_a, energy_h, error) = match solved {
        Ok((a, e)) => (a, e, String::new()),
        Err(e) => (f64::NAN, f64::NAN, e.to_string()),
    };
    SweepRow {
        value,
        integral_a,
        energy_h,
        converged: error.is_empty(),
        r_feasible: feasible.unwrap_or(false),
        error,
    }
}

fn run_sweep(p: &Pipeline) -> Result<ModeOutput> {
    let sweep = p.config.sweep.as_ref().ok_or_else(|| Error::Config {
        key: "sweep".into(),
        message: "missing [sweep] section".into(),
    })?;
    let rows = parallel::map_slice(p.config.execution(), &sweep.values, |&v| sweep_point(p, sweep.parameter, v));
    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.converged)
        .map(|r| (r.integral_a, r.energy_h))
        .collect();
    let slope = log_log_slope(&pairs);
    let first_infeasible = rows.iter().position(|r| !r.r_feasible);
    let first_failure = rows.iter().position(|r| !r.converged);
    let ordered = match (first_infeasible, first_failure) {
        (_, None) => true,
        (Some(i), Some(f)) => i <= f,
        (None, Some(_)) => false,
    };
    let invariants = vec![Invariant::holds("feasibility_before_failure", ordered)];
    let result = json!({
        "parameter": sweep.parameter,
        "slope": slope,
        "converged": pairs.len(),
        "points": rows.len(),
        "first_infeasible": first_infeasible.map(|i| rows[i].value),
        "first_failure": first_failure.map(|i| rows[i].value),
        "rows": rows,
    });
    Ok(ModeOutput {
        invariants,
        result,
        traces: vec![("sweep.csv".into(), csv_bytes(&rows)?)],
    })
}

#[derive(Serialize)]
struct ResidualRow {
    theta: f64,
    phi: f64,
    f: f64,
    lich: f64,
    vec: f64,
    hamiltonian: f64,
    momentum: f64,
}

fn run_residuals(p: &Pipeline) -> Result<ModeOutput> {
    let run = p.coupled()?;
    let (phi, f) = (&run.state.phi, &run.state.f);
    let report = residual_report(&p.bg, &p.seed, phi, f)?;
    let (lich, vec) = conformal_residuals(&p.bg, &p.seed, phi, f)?;
    let data = reconstruct(&p.bg, &p.seed, phi, f)?;
    let (ham, mom) = physical_residuals(&p.bg, &data, &p.seed.potential)?;
    let rows: Vec<ResidualRow> = (0..p.bg.m())
        .map(|i| ResidualRow {
            theta: p.bg.nodes()[i],
            phi: phi.samples[i],
            f: f.samples[i],
            lich: lich.samples[i],
            vec: vec.samples[i],
            hamiltonian: ham.samples[i],
            momentum: mom.samples[i],
        })
        .collect();
    let s = &p.config.solver;
    let mut invariants = coupled_invariants(p, &run);
    invariants.extend([
        Invariant::at_most("hamiltonian_sup", report.hamiltonian_sup, s.physical_tol),
        Invariant::at_most("momentum_sup", report.momentum_sup, s.physical_tol),
    ]);
    let result = json!({
        "residuals": report,
        "trace_defect": data.trace_defect,
        "coupled": coupled_summary(p, &run),
    });
    Ok(ModeOutput {
        invariants,
        result,
        traces: vec![("residuals.csv".into(), csv_bytes(&rows)?)],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub phi_disagreement: f64,
    pub f_disagreement: f64,
    pub disagreement: f64,
    pub flagged: bool,
}

/// Continuation to λ = 1 against the coupled fixed point on the same seed.
pub fn compare_methods(p: &Pipeline) -> (Result<Comparison>, Option<Error>, Option<Error>) {
    let c = &p.config.continuation;
    let continued = continue_family(&p.bg, &p.seed, &p.estimate, 1.0, c.num_steps, &p.continuation_options())
        .and_then(|branch| match branch.stalled_at {
            Some(l) => Err(Error::JacobianSingular(l)),
            None => rescale(&p.bg, &p.seed, branch.states.last().expect("nonempty")),
        });
    let coupled = p.coupled();
    match (continued, coupled) {
        (Ok(a), Ok(b)) => {
            let dphi = a.phi.sup_dist(&b.state.phi);
            let df = a.f.sup_dist(&b.state.f);
            let d = dphi.max(df);
            (
                Ok(Comparison {
                    phi_disagreement: dphi,
                    f_disagreement: df,
                    disagreement: d,
                    flagged: !(d <= COMPARE_FLAG_TOL),
                }),
                None,
                None,
            )
        }
        (a, b) => {
            let ea = a.err();
            let eb = b.err();
            let first = ea.clone().or(eb.clone()).expect("one side failed");
            (Err(first), ea, eb)
        }
    }
}

fn run_compare(p: &Pipeline) -> Result<ModeOutput> {
    let (cmp, cont_err, coupled_err) = compare_methods(p);
    match cmp {
        Ok(c) => Ok(ModeOutput {
            invariants: vec![Invariant::at_most("disagreement", c.disagreement, COMPARE_FLAG_TOL)],
            result: json!({ "comparison": c, "estimate": p.estimate }),
            traces: Vec::new(),
        }),
        Err(e) => {
            let both = cont_err.is_some() && coupled_err.is_some();
            let msg = |e: &Option<Error>| e.as_ref().map(|e| e.to_string());
            // Agreement on failure still counts as consistent; the run fails either way.
            Ok(ModeOutput {
                invariants: vec![
                    Invariant::holds("both_methods_converged", false),
                    Invariant::holds("failure_consistent", both),
                ],
                result: json!({
                    "continuation_error": msg(&cont_err),
                    "coupled_error": msg(&coupled_err),
                    "first_error": e.to_string(),
                }),
                traces: Vec::new(),
            })
        }
    }
}
