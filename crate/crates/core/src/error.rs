use thiserror::Error;

/// Failures raised by the solvers and the configuration layer.
///
/// Variants fall into two groups: contract violations (bad grids, parity,
/// configuration) and regime failures, where the data lies outside the
/// smallness/coercivity regime in which the existence argument applies.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: expected {expected} samples, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("parity violation: {0}")]
    ParityViolation(String),

    #[error("unresolved mode {mode}: must be below {limit}")]
    UnresolvedMode { mode: usize, limit: usize },

    #[error("coercivity hypothesis violated: lambda_min_h = {lambda_min:.6e}")]
    NotCoercive { lambda_min: f64 },

    #[error("positivity violated: min = {min:.6e} (discretization too coarse?)")]
    PositivityViolated { min: f64 },

    #[error("integral of the momentum density must be positive, got {0:.6e}")]
    DegenerateDensity(f64),

    #[error("alpha exhausted while searching for a positive subsolution")]
    AlphaExhausted,

    #[error("no supersolution in smallness regime: {0}")]
    NoSupersolution(String),

    #[error("nonpositive phi: min = {0:.6e}")]
    NonpositivePhi(f64),

    #[error("outside Omega_eps: min phi = {min:.6e} < -eps/2 = {bound:.6e}")]
    OutsideOmega { min: f64, bound: f64 },

    #[error("left ball B_R0: ||phi||_h = {norm:.6e} > R0 = {radius:.6e}")]
    LeftBall { norm: f64, radius: f64 },

    #[error("Newton stagnation at eps = {eps:.3e}: residual {residual:.3e} after {iterations} iterations")]
    NewtonStagnation {
        eps: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("instability: Hessian min eigenvalue {0:.6e} <= 0")]
    Instability(f64),

    #[error("sub/supersolution ordering violated: {0}")]
    BarrierOrdering(String),

    #[error("obstruction above tolerance: {obstruction:.3e} > {tolerance:.3e}")]
    ObstructionAboveTolerance { obstruction: f64, tolerance: f64 },

    #[error("no convergence after {iterations} Picard iterations (last delta {last_delta:.3e})")]
    NoConvergence {
        iterations: usize,
        last_delta: f64,
        deltas: Vec<f64>,
    },

    #[error("Jacobian singular at lambda = {0}")]
    JacobianSingular(f64),

    #[error("Newton diverged at lambda = {lambda}: residual {residual:.3e}")]
    NewtonDiverged { lambda: f64, residual: f64 },

    #[error("rescaled residual too large: {0:.3e}")]
    RescaledResidual(f64),

    #[error("chain infeasible at level {level}: {reason}")]
    ChainInfeasible { level: usize, reason: String },

    #[error("nonpositive Green kernel: min = {0:.6e}")]
    NonpositiveGreen(f64),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures that signal data outside the solvable regime rather
    /// than a malformed request.
    pub fn is_regime_failure(&self) -> bool {
        !matches!(
            self,
            Error::Config { .. } | Error::Io(_) | Error::ShapeMismatch { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
