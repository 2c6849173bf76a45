//! Command execution: loads the configured inputs, runs the requested
//! computation, and writes `result.json`, CSV artifacts, and
//! `manifest.json` into the output directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use increx_core::extrapolate::{
    estimate_functional_a, estimate_functional_a_n, estimate_functional_a_n_with_factor,
    estimate_functional_a_with_factor, predict_increment, predict_value, EstimateResult,
};
use increx_core::increments::FunctionalCoefficients;
use increx_core::minimax::{
    least_favorable, least_favorable_power_cap_infinite, saddle_check, DensityClassSpec,
};
use increx_core::simulate::{
    detuned_excess, empirical_mse, estimation_errors, integrate_to_sequence, simulate_increments,
    SimulationConfig, SimulationTarget,
};
use increx_core::spectral::{
    canonical_factorization, increment_density_factor, integrated_ma1_density, CanonicalFactor,
};
use increx_core::{DensityGrid, Error as CoreError, FrequencyGrid, IncrementSpec};

use crate::config::{
    ClassConfig, CommandKind, DensityConfig, FactorConfig, FunctionalConfig, RunConfig, SpecConfig,
    TargetConfig, MAX_GRID, MAX_WINDOW,
};

/// Failure of a run, split by exit code: configuration problems exit 1,
/// numerical failures exit 2.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "invalid configuration: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Wraps a library error with the step it failed in. Usage errors stay
/// configuration errors; everything else is a numerical failure.
fn core_err(context: &str, e: CoreError) -> CliError {
    let msg = format!("{context}: {e}");
    if e.is_usage() {
        CliError::Config(msg)
    } else {
        CliError::Numerical(msg)
    }
}

/// Everything taken from the command line.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Option<String>,
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    pub class: Option<String>,
    pub quiet: bool,
}

/// What a command produced: the `result.json` body, the extra CSV artifacts
/// it wrote, and solver diagnostics for the manifest.
struct Outcome {
    result: Value,
    artifacts: Vec<String>,
    branch_diagnostics: Option<Value>,
}

pub fn run(inv: &Invocation) -> Result<(), CliError> {
    apply_thread_cap()?;

    let bytes = fs::read(&inv.config)
        .map_err(|e| config_err(format!("cannot read config {}: {e}", inv.config.display())))?;
    let config_sha = hex_digest(&bytes);
    let config: RunConfig = serde_json::from_slice(&bytes)
        .map_err(|e| config_err(format!("config {}: {e}", inv.config.display())))?;
    config.validate().map_err(config_err)?;

    let command = resolve_command(inv, &config)?;
    check_class_selector(inv, &config, command)?;

    let grid_size = inv
        .grid
        .or(config.grid_size)
        .unwrap_or(increx_core::grid::DEFAULT_GRID_SIZE);
    if grid_size > MAX_GRID {
        return Err(config_err(format!(
            "grid size is {grid_size}, supported maximum is {MAX_GRID}"
        )));
    }
    let seed = inv.seed.or(config.seed).unwrap_or(0);

    fs::create_dir_all(&inv.out).map_err(|e| {
        config_err(format!(
            "cannot create output directory {}: {e}",
            inv.out.display()
        ))
    })?;

    let outcome = match command {
        CommandKind::Factorize => cmd_factorize(&config, grid_size, &inv.out)?,
        CommandKind::Extrapolate => cmd_extrapolate(&config, grid_size, &inv.out)?,
        CommandKind::Predict => cmd_predict(&config, grid_size, &inv.out)?,
        CommandKind::Minimax => cmd_minimax(&config, grid_size, seed, false, &inv.out)?,
        CommandKind::SaddleCheck => cmd_minimax(&config, grid_size, seed, true, &inv.out)?,
        CommandKind::Simulate => cmd_simulate(&config, grid_size, seed, &inv.out)?,
    };

    let mut result = outcome.result;
    insert(&mut result, "command", json!(command.label()));
    insert(&mut result, "grid_size", json!(grid_size));
    write_pretty(&inv.out.join("result.json"), &result)?;

    let uses_seed = matches!(command, CommandKind::SaddleCheck | CommandKind::Simulate);
    let manifest = json!({
        "command": command.label(),
        "config_path": inv.config.display().to_string(),
        "config_sha256": config_sha,
        "grid_size": grid_size,
        "seed": if uses_seed { json!(seed) } else { Value::Null },
        "versions": {
            "increx-cli": env!("CARGO_PKG_VERSION"),
            "increx-core": increx_core::VERSION,
        },
        "branch_diagnostics": outcome.branch_diagnostics.unwrap_or(Value::Null),
        "artifacts": outcome.artifacts,
        "timestamp_unix": unix_now(),
    });
    write_pretty(&inv.out.join("manifest.json"), &manifest)?;

    if !inv.quiet {
        let mut names = vec!["result.json".to_string(), "manifest.json".to_string()];
        if let Some(Value::Array(extra)) = manifest.get("artifacts") {
            names.extend(
                extra
                    .iter()
                    .filter_map(|v| v.as_str().map(str::to_string)),
            );
        }
        println!(
            "{}: wrote {} in {}",
            command.label(),
            names.join(", "),
            inv.out.display()
        );
    }
    Ok(())
}

fn resolve_command(inv: &Invocation, config: &RunConfig) -> Result<CommandKind, CliError> {
    let positional = inv
        .command
        .as_deref()
        .map(|s| {
            CommandKind::from_label(s).ok_or_else(|| {
                config_err(format!(
                    "unknown command {s:?}; expected one of factorize, extrapolate, predict, \
                     minimax, saddle-check, simulate"
                ))
            })
        })
        .transpose()?;
    match (positional, config.command) {
        (Some(p), Some(c)) if p != c => Err(config_err(format!(
            "command line says {} but the config says {}",
            p.label(),
            c.label()
        ))),
        (Some(p), _) => Ok(p),
        (None, Some(c)) => Ok(c),
        (None, None) => Err(config_err(
            "no command: pass one on the command line or set `command` in the config",
        )),
    }
}

fn check_class_selector(
    inv: &Invocation,
    config: &RunConfig,
    command: CommandKind,
) -> Result<(), CliError> {
    let Some(wanted) = inv.class.as_deref() else {
        return Ok(());
    };
    if !matches!(command, CommandKind::Minimax | CommandKind::SaddleCheck) {
        return Err(config_err(format!(
            "--class applies to minimax and saddle-check, not {}",
            command.label()
        )));
    }
    let class = config
        .class
        .as_ref()
        .ok_or_else(|| config_err("--class given but the config has no `class` section"))?;
    if class.label() != wanted {
        return Err(config_err(format!(
            "--class {wanted} does not match the configured class {}",
            class.label()
        )));
    }
    Ok(())
}

/// Honors the `INCREX_MAX_THREADS` cap before any parallel work starts.
fn apply_thread_cap() -> Result<(), CliError> {
    let raw = match std::env::var("INCREX_MAX_THREADS") {
        Ok(raw) => raw,
        Err(std::env::VarError::NotPresent) => return Ok(()),
        Err(e) => return Err(config_err(format!("INCREX_MAX_THREADS: {e}"))),
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| {
            config_err(format!(
                "INCREX_MAX_THREADS must be a positive integer, got {raw:?}"
            ))
        })?;
    // The global pool can only be configured once per process; losing the
    // race to a pool of the same size is not an error worth surfacing.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

fn hex_digest(bytes: &[u8]) -> String {
    use std::fmt::Write as _;
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        write!(out, "{byte:02x}").expect("string write");
    }
    out
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_pretty(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON serialization");
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| config_err(format!("cannot write {}: {e}", path.display())))
}

fn insert(value: &mut Value, key: &str, field: Value) {
    if let Value::Object(map) = value {
        map.insert(key.to_string(), field);
    }
}

fn require<'a, T>(
    section: &'a Option<T>,
    name: &str,
    command: CommandKind,
) -> Result<&'a T, CliError> {
    section.as_ref().ok_or_else(|| {
        config_err(format!(
            "{} needs a `{name}` section in the config",
            command.label()
        ))
    })
}

fn make_grid(size: usize) -> Result<FrequencyGrid, CliError> {
    FrequencyGrid::new(size).map_err(|e| core_err("frequency grid", e))
}

fn make_spec(cfg: &SpecConfig) -> Result<IncrementSpec, CliError> {
    IncrementSpec::new(cfg.order, cfg.step).map_err(|e| core_err("increment spec", e))
}

fn load_density(
    src: &DensityConfig,
    grid: &FrequencyGrid,
    role: &str,
) -> Result<DensityGrid, CliError> {
    match src {
        DensityConfig::Constant { level } => {
            DensityGrid::constant(grid.clone(), *level).map_err(|e| core_err(role, e))
        }
        DensityConfig::IntegratedMa1 { theta } => {
            integrated_ma1_density(grid, *theta).map_err(|e| core_err(role, e))
        }
        DensityConfig::Csv { path } => {
            if !path.exists() {
                return Err(config_err(format!(
                    "{role}: file {} does not exist",
                    path.display()
                )));
            }
            let density = DensityGrid::from_csv(path).map_err(|e| core_err(role, e))?;
            if density.grid().size() != grid.size() {
                return Err(config_err(format!(
                    "{role}: {} holds a grid of {} nodes but the run uses {}; set grid_size to match",
                    path.display(),
                    density.grid().size(),
                    grid.size()
                )));
            }
            Ok(density)
        }
    }
}

fn load_coeffs(
    inline: &Option<Vec<f64>>,
    csv: &Option<PathBuf>,
    what: &str,
) -> Result<Vec<f64>, CliError> {
    let coeffs = match (inline, csv) {
        (Some(c), None) => c.clone(),
        (None, Some(path)) => read_coeff_csv(path, what)?,
        (None, None) => {
            return Err(config_err(format!("{what} needs either `coeffs` or `csv`")))
        }
        (Some(_), Some(_)) => {
            return Err(config_err(format!(
                "{what} has both `coeffs` and `csv`; keep one"
            )))
        }
    };
    if coeffs.len() > MAX_WINDOW {
        return Err(config_err(format!(
            "{what} has {} coefficients, supported maximum is {MAX_WINDOW}",
            coeffs.len()
        )));
    }
    Ok(coeffs)
}

fn load_functional(cfg: &FunctionalConfig) -> Result<FunctionalCoefficients, CliError> {
    let coeffs = load_coeffs(&cfg.coeffs, &cfg.csv, "functional")?;
    match (cfg.tail_ratio, cfg.tail_constant) {
        (None, None) => FunctionalCoefficients::finite(coeffs),
        (Some(r), Some(c)) => FunctionalCoefficients::truncated_infinite(coeffs, r, c),
        _ => {
            return Err(config_err(
                "functional tail needs both `tail_ratio` and `tail_constant`",
            ))
        }
    }
    .map_err(|e| core_err("functional", e))
}

fn load_factor(cfg: &FactorConfig) -> Result<CanonicalFactor, CliError> {
    let coeffs = load_coeffs(&cfg.coeffs, &cfg.csv, "factor")?;
    CanonicalFactor::new(coeffs).map_err(|e| core_err("factor", e))
}

/// Stored factor length: the user's value checked against the grid, or the
/// given default clamped to it.
fn resolve_factor_len(
    configured: Option<usize>,
    grid_size: usize,
    default: usize,
) -> Result<usize, CliError> {
    match configured {
        Some(l) if l == 0 || l > grid_size / 2 => Err(config_err(format!(
            "factor_len is {l}, supported range for a grid of {grid_size} is 1..={}",
            grid_size / 2
        ))),
        Some(l) => Ok(l),
        None => Ok(default.clamp(1, grid_size / 2)),
    }
}

fn write_coeff_csv(path: &Path, coeffs: &[f64]) -> Result<(), CliError> {
    use std::fmt::Write as _;
    let mut text = String::with_capacity(coeffs.len() * 28 + 8);
    text.push_str("k,coeff\n");
    for (k, c) in coeffs.iter().enumerate() {
        writeln!(text, "{k},{c:.16e}").expect("string write");
    }
    fs::write(path, text)
        .map_err(|e| config_err(format!("cannot write {}: {e}", path.display())))
}

fn read_coeff_csv(path: &Path, what: &str) -> Result<Vec<f64>, CliError> {
    if !path.exists() {
        return Err(config_err(format!(
            "{what}: file {} does not exist",
            path.display()
        )));
    }
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(format!("{what}: cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "k,coeff" => {}
        other => {
            return Err(config_err(format!(
                "{what}: {} must start with the header 'k,coeff', found {other:?}",
                path.display()
            )))
        }
    }
    let mut coeffs = Vec::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, ',');
        let k: usize = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| config_err(format!("{what}: bad index in row {line:?}")))?;
        let c: f64 = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| config_err(format!("{what}: bad coefficient in row {line:?}")))?;
        if k != coeffs.len() {
            return Err(config_err(format!(
                "{what}: index {k} out of order, expected {}",
                coeffs.len()
            )));
        }
        coeffs.push(c);
    }
    Ok(coeffs)
}

fn head(coeffs: &[f64]) -> Vec<f64> {
    coeffs.iter().take(8).copied().collect()
}

fn target_json(target: &TargetConfig) -> Value {
    match target {
        TargetConfig::Increment { m } => json!({"kind": "increment", "m": m}),
        TargetConfig::Value { m } => json!({"kind": "value", "m": m}),
        TargetConfig::Functional => json!({"kind": "functional"}),
    }
}

fn cmd_factorize(config: &RunConfig, grid_size: usize, out: &Path) -> Result<Outcome, CliError> {
    let grid = make_grid(grid_size)?;
    let source = require(&config.density, "density", CommandKind::Factorize)?;
    let density = load_density(source, &grid, "density")?;
    let len = resolve_factor_len(config.factor_len, grid_size, increx_core::DEFAULT_FACTOR_LEN)?;
    let factor = canonical_factorization(&density, len)
        .map_err(|e| core_err("canonical factorization", e))?;
    write_coeff_csv(&out.join("factor.csv"), factor.coeffs())?;
    let mut artifacts = vec!["factor.csv".to_string()];

    let mut result = json!({
        "factor_csv_path": "factor.csv",
        "len": factor.coeffs().len(),
        "power": factor.power(),
        "head": head(factor.coeffs()),
    });

    // With an increment specification the induced increment density is
    // factored as well.
    if let Some(spec_cfg) = &config.spec {
        let spec = make_spec(spec_cfg)?;
        let inc = increment_density_factor(&density, spec, len)
            .map_err(|e| core_err("increment density factorization", e))?;
        write_coeff_csv(&out.join("increment_factor.csv"), inc.coeffs())?;
        artifacts.push("increment_factor.csv".to_string());
        insert(
            &mut result,
            "increment_factor_csv_path",
            json!("increment_factor.csv"),
        );
        insert(&mut result, "increment_factor_head", json!(head(inc.coeffs())));
    }

    Ok(Outcome {
        result,
        artifacts,
        branch_diagnostics: None,
    })
}

fn finish_estimate(estimate: EstimateResult, out: &Path) -> Result<Outcome, CliError> {
    estimate
        .characteristic()
        .to_csv(&out.join("characteristic.csv"))
        .map_err(|e| core_err("characteristic CSV", e))?;
    Ok(Outcome {
        result: estimate.to_json("characteristic.csv"),
        artifacts: vec!["characteristic.csv".to_string()],
        branch_diagnostics: None,
    })
}

fn cmd_extrapolate(config: &RunConfig, grid_size: usize, out: &Path) -> Result<Outcome, CliError> {
    let command = CommandKind::Extrapolate;
    let grid = make_grid(grid_size)?;
    let spec = make_spec(require(&config.spec, "spec", command)?)?;
    let a = load_functional(require(&config.functional, "functional", command)?)?;
    let density = load_density(require(&config.density, "density", command)?, &grid, "density")?;
    let estimate = match config.window {
        Some(n) => estimate_functional_a_n(&a, &density, spec, n),
        None => estimate_functional_a(&a, &density, spec),
    }
    .map_err(|e| core_err("functional estimation", e))?;
    finish_estimate(estimate, out)
}

/// The increment factor driving a prediction: given directly, or derived
/// from a configured density.
fn predict_factor(
    config: &RunConfig,
    grid: &FrequencyGrid,
    spec: IncrementSpec,
) -> Result<CanonicalFactor, CliError> {
    match (&config.factor, &config.density) {
        (Some(f), _) => load_factor(f),
        (None, Some(d)) => {
            let density = load_density(d, grid, "density")?;
            let len = resolve_factor_len(config.factor_len, grid.size(), grid.size() / 2)?;
            increment_density_factor(&density, spec, len)
                .map_err(|e| core_err("increment density factorization", e))
        }
        (None, None) => Err(config_err(
            "predict needs a `factor` or a `density` section",
        )),
    }
}

fn cmd_predict(config: &RunConfig, grid_size: usize, out: &Path) -> Result<Outcome, CliError> {
    let command = CommandKind::Predict;
    let grid = make_grid(grid_size)?;
    let spec = make_spec(require(&config.spec, "spec", command)?)?;
    let phi = predict_factor(config, &grid, spec)?;
    let target = require(&config.target, "target", command)?;
    let estimate = match target {
        TargetConfig::Increment { m } => predict_increment(*m, spec, &phi, &grid),
        TargetConfig::Value { m } => predict_value(*m, spec, &phi, &grid),
        TargetConfig::Functional => {
            return Err(config_err(
                "predict handles `increment` and `value` targets; use extrapolate for functionals",
            ))
        }
    }
    .map_err(|e| core_err("prediction", e))?;
    let mut outcome = finish_estimate(estimate, out)?;
    insert(&mut outcome.result, "target", target_json(target));
    Ok(outcome)
}

fn build_class(cfg: &ClassConfig, grid: &FrequencyGrid) -> Result<DensityClassSpec, CliError> {
    Ok(match cfg {
        ClassConfig::PowerCap { p0 } => DensityClassSpec::PowerCap { p0: *p0 },
        ClassConfig::Moments { rho } => DensityClassSpec::Moments { rho: rho.clone() },
        ClassConfig::Band { lower, upper, p0 } => {
            let v = load_density(lower, grid, "band lower envelope")?;
            let u = match upper {
                Some(src) => load_density(src, grid, "band upper envelope")?,
                None => DensityGrid::new(grid.clone(), vec![f64::INFINITY; grid.size()])
                    .map_err(|e| core_err("band upper envelope", e))?,
            };
            DensityClassSpec::Band { v, u, p0: *p0 }
        }
        ClassConfig::Neighborhood { lower, epsilon } => DensityClassSpec::Neighborhood {
            v: load_density(lower, grid, "neighborhood envelope")?,
            epsilon: *epsilon,
        },
    })
}

fn cmd_minimax(
    config: &RunConfig,
    grid_size: usize,
    seed: u64,
    with_saddle: bool,
    out: &Path,
) -> Result<Outcome, CliError> {
    let command = if with_saddle {
        CommandKind::SaddleCheck
    } else {
        CommandKind::Minimax
    };
    let grid = make_grid(grid_size)?;
    let spec = make_spec(require(&config.spec, "spec", command)?)?;
    let a = load_functional(require(&config.functional, "functional", command)?)?;
    let class = build_class(require(&config.class, "class", command)?, &grid)?;
    class.validate().map_err(|e| core_err("density class", e))?;

    let mut result = match (&class, config.window) {
        // The infinite-window power-cap route takes an explicit operator
        // truncation; everything else goes through the dispatcher.
        (DensityClassSpec::PowerCap { p0 }, None) => {
            let truncation = config
                .truncation
                .unwrap_or(increx_core::DEFAULT_OPERATOR_TRUNCATION);
            least_favorable_power_cap_infinite(&a, spec, *p0, &grid, truncation)
        }
        _ => least_favorable(&class, &a, spec, &grid, config.window),
    }
    .map_err(|e| core_err("least favorable density", e))?;

    if with_saddle {
        let probes = config.probes.unwrap_or(200);
        if probes == 0 {
            return Err(config_err(
                "probes is 0; the saddle check needs at least one probe",
            ));
        }
        let report = saddle_check(&result, &class, spec, probes, seed);
        result.attach_saddle(report);
    }

    result
        .f0()
        .to_csv(&out.join("f0.csv"))
        .map_err(|e| core_err("density CSV", e))?;
    write_coeff_csv(&out.join("phi0.csv"), result.phi0().coeffs())?;
    let artifacts = vec!["f0.csv".to_string(), "phi0.csv".to_string()];

    let diag = result.diagnostics();
    let branch_diagnostics = json!({
        "branch": result.branch().to_string(),
        "iterations": diag.iterations,
        "fixed_point_residual": diag.fixed_point_residual,
        "clamped_lower_fraction": diag.clamped_lower_fraction,
        "clamped_upper_fraction": diag.clamped_upper_fraction,
        "truncation_rel_change": diag.truncation_rel_change,
        "candidates_examined": diag.candidates_examined,
    });

    let mut json_result = result.to_json("f0.csv");
    insert(&mut json_result, "mse", json!(result.mse()));
    insert(&mut json_result, "eigen_residual", json!(result.eigen_residual()));
    insert(&mut json_result, "phi0_csv_path", json!("phi0.csv"));
    insert(&mut json_result, "diagnostics", branch_diagnostics.clone());
    if let Some(saddle) = result.saddle() {
        insert(
            &mut json_result,
            "saddle_summary",
            json!({
                "probes": saddle.probes().len(),
                "right_violation": saddle.right_violation(),
                "left_min_gap": saddle.left_min_gap(),
                "negative_control_delta": saddle.negative_control_delta(),
                "negative_control_flagged": saddle.negative_control_flagged(),
                "reference_mse": saddle.reference_mse(),
            }),
        );
    }
    Ok(Outcome {
        result: json_result,
        artifacts,
        branch_diagnostics: Some(branch_diagnostics),
    })
}

fn write_error_csv(path: &Path, errors: &[f64]) -> Result<(), CliError> {
    use std::fmt::Write as _;
    let mut text = String::with_capacity(errors.len() * 28 + 16);
    text.push_str("trial,error\n");
    for (trial, err) in errors.iter().enumerate() {
        writeln!(text, "{trial},{err:.16e}").expect("string write");
    }
    fs::write(path, text)
        .map_err(|e| config_err(format!("cannot write {}: {e}", path.display())))
}

fn cmd_simulate(
    config: &RunConfig,
    grid_size: usize,
    seed: u64,
    out: &Path,
) -> Result<Outcome, CliError> {
    let command = CommandKind::Simulate;
    let grid = make_grid(grid_size)?;
    let spec = make_spec(require(&config.spec, "spec", command)?)?;
    let phi = load_factor(require(&config.factor, "factor", command)?)?;
    let trials = *require(&config.trials, "trials", command)?;
    let path_length = *require(&config.path_length, "path_length", command)?;

    // The estimate under test is built from the same factor that drives the
    // simulation, so the analytic error is the exact reference value.
    let functional = match &config.target {
        None | Some(TargetConfig::Functional) => Some(load_functional(require(
            &config.functional,
            "functional",
            command,
        )?)?),
        Some(_) => None,
    };
    let (estimate, target, target_desc) = match (&config.target, &functional) {
        (None | Some(TargetConfig::Functional), Some(a)) => {
            let estimate = match config.window {
                Some(n) => estimate_functional_a_n_with_factor(a, &grid, spec, n, &phi),
                None => estimate_functional_a_with_factor(a, &grid, spec, &phi),
            }
            .map_err(|e| core_err("functional estimation", e))?;
            (
                estimate,
                SimulationTarget::Functional { a },
                json!({"kind": "functional"}),
            )
        }
        (Some(TargetConfig::Increment { m }), _) => (
            predict_increment(*m, spec, &phi, &grid).map_err(|e| core_err("prediction", e))?,
            SimulationTarget::Increment { m: *m },
            json!({"kind": "increment", "m": m}),
        ),
        (Some(TargetConfig::Value { m }), _) => (
            predict_value(*m, spec, &phi, &grid).map_err(|e| core_err("prediction", e))?,
            SimulationTarget::Value { m: *m },
            json!({"kind": "value", "m": m}),
        ),
        _ => unreachable!("functional is loaded exactly for the functional target"),
    };

    let sim_config = match config.burn_in {
        Some(b) => SimulationConfig::with_burn_in(spec, phi.clone(), path_length, b, trials, seed),
        None => SimulationConfig::new(spec, phi.clone(), path_length, trials, seed),
    }
    .map_err(|e| core_err("simulation config", e))?;
    let increments = simulate_increments(&sim_config);
    let initial = vec![0.0; (spec.order() * spec.step()) as usize];
    let paths = integrate_to_sequence(&increments, spec, &initial)
        .map_err(|e| core_err("integration", e))?;

    let report = empirical_mse(&estimate, &paths, spec, &target)
        .map_err(|e| core_err("empirical error report", e))?;
    let mut result = json!({
        "target": target_desc,
        "trials": trials,
        "path_length": path_length,
        "burn_in": sim_config.burn_in(),
        "seed": seed,
        "report": report.to_json(),
    });
    let mut artifacts = Vec::new();
    if let Some(scale) = config.detune_scale {
        let detuned = detuned_excess(&estimate, &paths, spec, &target, scale)
            .map_err(|e| core_err("detuned control", e))?;
        insert(&mut result, "detuned", detuned.to_json());
    }
    if config.dump_errors.unwrap_or(false) {
        let errors = estimation_errors(&estimate, &paths, spec, &target)
            .map_err(|e| core_err("error dump", e))?;
        write_error_csv(&out.join("errors.csv"), &errors)?;
        artifacts.push("errors.csv".to_string());
        insert(&mut result, "errors_csv_path", json!("errors.csv"));
    }
    Ok(Outcome {
        result,
        artifacts,
        branch_diagnostics: None,
    })
}
