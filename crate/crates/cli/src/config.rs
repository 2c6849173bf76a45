//! Run configuration: one JSON document describing one command.
//!
//! The schema is deliberately flat — a `command` plus the sections it needs.
//! Unknown fields are rejected so a typo cannot silently change a run.
//! Array-valued inputs may be given inline or as CSV paths; every CSV format
//! used here is also what the tool itself emits.

use std::path::PathBuf;

use serde::Deserialize;

/// Largest supported increment order.
pub const MAX_ORDER: u32 = 8;
/// Largest supported increment step.
pub const MAX_STEP: u32 = 64;
/// Largest supported frequency grid.
pub const MAX_GRID: usize = 65536;
/// Largest supported coefficient window / truncation / factor length.
pub const MAX_WINDOW: usize = 4096;

/// The command a config drives. Also accepted as a positional argument on
/// the command line; when both are present they must agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Factorize,
    Extrapolate,
    Predict,
    Minimax,
    SaddleCheck,
    Simulate,
}

impl CommandKind {
    pub fn label(self) -> &'static str {
        match self {
            CommandKind::Factorize => "factorize",
            CommandKind::Extrapolate => "extrapolate",
            CommandKind::Predict => "predict",
            CommandKind::Minimax => "minimax",
            CommandKind::SaddleCheck => "saddle-check",
            CommandKind::Simulate => "simulate",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "factorize" => Some(CommandKind::Factorize),
            "extrapolate" => Some(CommandKind::Extrapolate),
            "predict" => Some(CommandKind::Predict),
            "minimax" => Some(CommandKind::Minimax),
            "saddle-check" => Some(CommandKind::SaddleCheck),
            "simulate" => Some(CommandKind::Simulate),
            _ => None,
        }
    }
}

/// Increment specification: order of differencing and step between the
/// differenced values.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub order: u32,
    pub step: u32,
}

/// Coefficients of the value functional, inline or from CSV, with an
/// optional declared geometric tail bound `|a(k)| <= c * r^k` past the
/// stored prefix.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalConfig {
    #[serde(default)]
    pub coeffs: Option<Vec<f64>>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub tail_ratio: Option<f64>,
    #[serde(default)]
    pub tail_constant: Option<f64>,
}

/// Coefficients of a canonical (minimum-phase) factor, inline or from CSV.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorConfig {
    #[serde(default)]
    pub coeffs: Option<Vec<f64>>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

/// Where a gridded density comes from.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum DensityConfig {
    /// Flat density at the given level.
    Constant { level: f64 },
    /// Density of a sequence whose first increments form a unit-innovation
    /// MA(1) with the given coefficient.
    IntegratedMa1 { theta: f64 },
    /// Density samples from a `lambda,value` CSV on the configured grid.
    Csv { path: PathBuf },
}

/// What `predict` or `simulate` aims at.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum TargetConfig {
    /// The single increment at offset `m >= 0`.
    Increment { m: usize },
    /// The single raw value at offset `m` (needs `m <` the step).
    Value { m: usize },
    /// The value functional from the `functional` section.
    Functional,
}

/// Density class for the minimax commands.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum ClassConfig {
    /// Densities with mean power at most `p0`.
    PowerCap { p0: f64 },
    /// Densities with the given cosine moments; `rho[0]` is the power.
    Moments { rho: Vec<f64> },
    /// Densities pinched between `lower` and `upper` (omitted upper means
    /// unbounded) with mean power at most `p0`.
    Band {
        lower: DensityConfig,
        #[serde(default)]
        upper: Option<DensityConfig>,
        p0: f64,
    },
    /// Densities at least `lower` whose mean excess equals `epsilon`.
    Neighborhood { lower: DensityConfig, epsilon: f64 },
}

impl ClassConfig {
    /// Label used by the `--class` selector; matches the library's class
    /// labels.
    pub fn label(&self) -> &'static str {
        match self {
            ClassConfig::PowerCap { .. } => "power-cap",
            ClassConfig::Moments { .. } => "moments",
            ClassConfig::Band { .. } => "band",
            ClassConfig::Neighborhood { .. } => "neighborhood",
        }
    }
}

/// The whole run configuration. Every command reads `spec` and `grid_size`;
/// the remaining sections are required or ignored per command, and an
/// unneeded section is not an error.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Command to run; may instead come from the command line.
    #[serde(default)]
    pub command: Option<CommandKind>,
    #[serde(default)]
    pub spec: Option<SpecConfig>,
    /// Frequency grid size (power of two); defaults to the library default.
    #[serde(default)]
    pub grid_size: Option<usize>,
    /// Seed for the randomized commands (simulate, saddle-check).
    #[serde(default)]
    pub seed: Option<u64>,
    /// Coefficient window: restricts estimation to offsets `0..=window` and
    /// selects the finite-window minimax route.
    #[serde(default)]
    pub window: Option<usize>,
    /// Operator truncation for the infinite-window minimax route.
    #[serde(default)]
    pub truncation: Option<usize>,
    /// Stored length of factor coefficient sequences.
    #[serde(default)]
    pub factor_len: Option<usize>,
    #[serde(default)]
    pub functional: Option<FunctionalConfig>,
    #[serde(default)]
    pub density: Option<DensityConfig>,
    #[serde(default)]
    pub factor: Option<FactorConfig>,
    #[serde(default)]
    pub target: Option<TargetConfig>,
    #[serde(default)]
    pub class: Option<ClassConfig>,
    /// Probe count for saddle-check.
    #[serde(default)]
    pub probes: Option<usize>,
    /// Monte Carlo trial count.
    #[serde(default)]
    pub trials: Option<usize>,
    /// Length of each simulated increment path.
    #[serde(default)]
    pub path_length: Option<usize>,
    /// Warm-up innovations discarded before the emitted path; defaults to
    /// one factor length, which makes every emitted increment exact.
    #[serde(default)]
    pub burn_in: Option<usize>,
    /// Weight rescaling for the simulate optimality control; the control is
    /// skipped when absent.
    #[serde(default)]
    pub detune_scale: Option<f64>,
    /// Writes per-trial estimation errors to `errors.csv` when true.
    #[serde(default)]
    pub dump_errors: Option<bool>,
}

impl RunConfig {
    /// Checks the documented parameter ranges. Violations are reported with
    /// the offending value and the bound so the message names the broken
    /// precondition.
    pub fn validate(&self) -> Result<(), String> {
        if let Some(spec) = &self.spec {
            if spec.order == 0 || spec.order > MAX_ORDER {
                return Err(format!(
                    "spec.order is {}, supported range is 1..={MAX_ORDER}",
                    spec.order
                ));
            }
            if spec.step == 0 || spec.step > MAX_STEP {
                return Err(format!(
                    "spec.step is {}, supported range is 1..={MAX_STEP}",
                    spec.step
                ));
            }
        }
        if let Some(g) = self.grid_size {
            if g > MAX_GRID {
                return Err(format!("grid_size is {g}, supported maximum is {MAX_GRID}"));
            }
        }
        for (name, value) in [
            ("window", self.window),
            ("truncation", self.truncation),
            ("factor_len", self.factor_len),
        ] {
            if let Some(v) = value {
                if v > MAX_WINDOW {
                    return Err(format!("{name} is {v}, supported maximum is {MAX_WINDOW}"));
                }
            }
        }
        if let Some(f) = &self.functional {
            if let Some(coeffs) = &f.coeffs {
                if coeffs.len() > MAX_WINDOW {
                    return Err(format!(
                        "functional has {} coefficients, supported maximum is {MAX_WINDOW}",
                        coeffs.len()
                    ));
                }
            }
        }
        Ok(())
    }
}
