//! TOML run configuration. Unknown keys are rejected everywhere.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::parallel::Execution;
use crate::seed::SeedConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Lichnerowicz,
    Coupled,
    Continuation,
    Certify,
    Sweep,
    Residuals,
    Compare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "M")]
    pub m: usize,
    /// Circle length; defaults to 2π.
    #[serde(rename = "L", default = "two_pi")]
    pub l: f64,
}

fn two_pi() -> f64 {
    2.0 * PI
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub pde_tol: f64,
    pub eps_levels: usize,
    pub max_newton: usize,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub residual_tol: f64,
    /// Bound on the physical (reconstructed) constraint residuals.
    pub physical_tol: f64,
    pub random_starts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            pde_tol: 1e-9,
            eps_levels: 12,
            max_newton: 60,
            picard_tol: 1e-10,
            picard_max_iter: 200,
            residual_tol: 1e-8,
            physical_tol: 1e-6,
            random_starts: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentumConfig {
    pub strict: bool,
}

impl Default for MomentumConfig {
    fn default() -> Self {
        MomentumConfig { strict: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationConfig {
    pub lambda_max: f64,
    pub num_steps: usize,
    pub min_step: f64,
    pub newton_tol: f64,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            lambda_max: 1.0,
            num_steps: 16,
            min_step: 1e-4,
            newton_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    pub depth: usize,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig { depth: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Set s₀ to each value.
    SigmaAmp,
    /// Multiply σ and π by each value.
    TtScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub grid: GridConfig,
    pub seed: SeedConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub momentum: MomentumConfig,
    #[serde(default)]
    pub continuation: ContinuationConfig,
    #[serde(default)]
    pub certify: CertifyConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    /// Promote every flagged discrepancy to a failure.
    #[serde(default)]
    pub strict: bool,
    #[serde(default = "default_rng_seed")]
    pub rng_seed: u64,
    #[serde(default)]
    pub sequential: bool,
}

fn default_rng_seed() -> u64 {
    0x5eed
}

fn config_error(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let config: RunConfig = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            // Unknown/missing field messages already quote the key.
            let key = message
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "<document>".into());
            config_error(&key, message)
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error("--config", format!("cannot read {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        GridSpec::new(self.grid.m, self.grid.l).map_err(|e| config_error("grid", e.to_string()))?;
        let s = &self.solver;
        for (key, v) in [
            ("solver.pde_tol", s.pde_tol),
            ("solver.picard_tol", s.picard_tol),
            ("solver.residual_tol", s.residual_tol),
            ("solver.physical_tol", s.physical_tol),
            ("continuation.min_step", self.continuation.min_step),
            ("continuation.newton_tol", self.continuation.newton_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_error(key, format!("must be positive and finite, got {v}")));
            }
        }
        let c = &self.continuation;
        if !(c.lambda_max > 0.0 && c.lambda_max <= 1.0) {
            return Err(config_error("continuation.lambda_max", "must lie in (0, 1]"));
        }
        if c.num_steps == 0 {
            return Err(config_error("continuation.num_steps", "must be positive"));
        }
        if self.certify.depth > crate::certificates::MAX_DEPTH {
            return Err(config_error("certify.depth", format!("must be at most {}", crate::certificates::MAX_DEPTH)));
        }
        if self.mode == Mode::Sweep {
            match &self.sweep {
                None => return Err(config_error("sweep", "mode = \"sweep\" needs a [sweep] section")),
                Some(sw) if sw.values.is_empty() => return Err(config_error("sweep.values", "must not be empty")),
                Some(sw) if sw.values.iter().any(|v| !v.is_finite()) => {
                    return Err(config_error("sweep.values", "must be finite"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            num_points: self.grid.m,
            circle_length: self.grid.l,
        }
    }

    pub fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    /// SHA-256 of the canonical JSON form, so formatting and key order in
    /// the TOML source do not matter.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}
