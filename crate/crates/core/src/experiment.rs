//! Experiment configuration and the driver behind the `ktrap` binary.
//!
//! A run is configured from an optional JSON file and command-line flags
//! (flags win), validated in full before anything is simulated, and writes
//! its outputs plus a `<subcommand>.manifest.json` into the output directory.
//! Replicate `i` always uses seed `mix64(master_seed, i)`, so the data files
//! are a pure function of the resolved configuration.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{
    arcsine_pi, finite_n_laplace, jump_field_laplace, ks_statistic, limit_laplace, oracle_for,
    pi_hit, q_hit, r_hit, rescaled_laplace, write_aging_csv, write_laplace_csv, AgingEstimate,
    AgingKind, AgingRow, CurveLabel, LaplaceCurve,
};
use crate::env::{alpha_hat, c_hat, sample_pareto_env, sample_stable_jumps, JumpField};
use crate::error::Error;
use crate::parallel::{replicate, with_workers};
use crate::path::{JumpConvention, StepPath};
use crate::process::{
    rescale_small_time, rescale_trap_path, simulate_k_path, simulate_trap_path, simulate_zhat,
    trap_horizon_for,
};
use crate::seed::{mix64, STREAM_DYNAMICS, STREAM_ENVIRONMENT};
use crate::special::gamma;

/// Environment variable that overrides the output directory.
pub const OUTPUT_DIR_ENV: &str = "KTRAP_OUTPUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

const DEFAULT_MAX_JUMPS: usize = 2000;
const DEFAULT_REPLICATES: usize = 1000;
const DEFAULT_OUTPUT: &str = "ktrap-out";
const DEFAULT_LAMBDAS: [f64; 8] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    GenEnv,
    SimTrap,
    SimK,
    SimZhat,
    Laplace,
    Aging,
    Arcsine,
    Selfsim,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::GenEnv => "gen-env",
            Subcommand::SimTrap => "sim-trap",
            Subcommand::SimK => "sim-k",
            Subcommand::SimZhat => "sim-zhat",
            Subcommand::Laplace => "laplace",
            Subcommand::Aging => "aging",
            Subcommand::Arcsine => "arcsine",
            Subcommand::Selfsim => "selfsim",
        }
    }
}

/// Which process the `aging` subcommand samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AgingProcess {
    /// Rescaled K process `ε^{-1} Z_{εt}` in one fixed jump field.
    #[default]
    K,
    /// The self-similar limit, fresh environment per replicate.
    Zhat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConventionFlag {
    Transition,
    ValueChange,
}

/// Configuration as it appears in a JSON file; every key is optional here.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub subcommand: Option<Subcommand>,
    pub alpha: Option<f64>,
    pub a: Option<f64>,
    pub alpha_hat: Option<f64>,
    pub n: Option<usize>,
    pub max_jumps: Option<usize>,
    pub epsilon: Option<f64>,
    pub horizon: Option<f64>,
    pub t_s_grid: Option<Vec<(f64, f64)>>,
    pub replicates: Option<usize>,
    pub master_seed: Option<u64>,
    pub workers: Option<usize>,
    pub output_path: Option<String>,
    pub lambdas: Option<Vec<f64>>,
    pub process: Option<AgingProcess>,
    pub convention: Option<JumpConvention>,
}

impl ConfigFile {
    /// Fills every key of `self` that `flags` sets.
    fn overlay(mut self, flags: ConfigFile) -> ConfigFile {
        macro_rules! take {
            ($($field:ident),*) => { $( if flags.$field.is_some() { self.$field = flags.$field; } )* };
        }
        take!(
            subcommand,
            alpha,
            a,
            alpha_hat,
            n,
            max_jumps,
            epsilon,
            horizon,
            t_s_grid,
            replicates,
            master_seed,
            workers,
            output_path,
            lambdas,
            process,
            convention
        );
        self
    }
}

/// Fully resolved and validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub subcommand: Subcommand,
    pub alpha: Option<f64>,
    pub a: f64,
    pub alpha_hat: Option<f64>,
    pub n: Option<usize>,
    pub max_jumps: usize,
    pub epsilon: Option<f64>,
    pub horizon: Option<f64>,
    pub t_s_grid: Vec<(f64, f64)>,
    pub replicates: usize,
    pub master_seed: u64,
    pub workers: usize,
    pub output_path: PathBuf,
    pub lambdas: Vec<f64>,
    pub process: AgingProcess,
    pub convention: JumpConvention,
}

/// Configuration problem; the message names the offending key.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config error in `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

fn config_err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_owned(),
        message: message.into(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Sim(_) | RunError::Io { .. } => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ktrap",
    version,
    about = "Trap models on the complete graph, K processes and their aging limits"
)]
struct Cli {
    /// What to run; may also come from the config file.
    #[arg(value_enum)]
    subcommand: Option<Subcommand>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Tail index of the trap depths, in (0,1).
    #[arg(long)]
    alpha: Option<f64>,
    /// Asymmetry parameter, in [0,1).
    #[arg(long = "a")]
    a: Option<f64>,
    /// Limit index, for runs that need only the self-similar limit.
    #[arg(long)]
    alpha_hat: Option<f64>,
    /// Number of sites of the finite trap model.
    #[arg(long)]
    n: Option<usize>,
    /// Jumps kept in a truncated jump field (default 2000).
    #[arg(long)]
    max_jumps: Option<usize>,
    /// Small-time scale for rescaled K-process runs.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Time horizon of simulated paths.
    #[arg(long)]
    horizon: Option<f64>,
    /// Comma-separated `t:s` pairs, e.g. `1:1,2:1`.
    #[arg(long)]
    grid: Option<String>,
    /// Ensemble size (default 1000).
    #[arg(long)]
    replicates: Option<usize>,
    /// Master seed; replicate i uses mix64(seed, i).
    #[arg(long, alias = "master-seed")]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (overridden by KTRAP_OUTPUT_DIR).
    #[arg(long)]
    output: Option<String>,
    /// Comma-separated λ grid for `laplace`.
    #[arg(long)]
    lambdas: Option<String>,
    /// Process whose aging is estimated (default k).
    #[arg(long, value_enum)]
    process: Option<AgingProcess>,
    /// Which events count as jumps for the Pi estimator.
    #[arg(long, value_enum)]
    convention: Option<ConventionFlag>,
}

/// Parses `1:1,2:0.5` into `(t, s)` pairs.
pub fn parse_grid(text: &str) -> Result<Vec<(f64, f64)>, ConfigError> {
    text.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|pair| {
            let (t, s) = pair.split_once(':').ok_or_else(|| {
                config_err("t_s_grid", format!("`{pair}` is not of the form t:s"))
            })?;
            let num = |x: &str| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| config_err("t_s_grid", format!("`{x}` is not a number")))
            };
            Ok((num(t)?, num(s)?))
        })
        .collect()
}

fn parse_list(key: &str, text: &str) -> Result<Vec<f64>, ConfigError> {
    text.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| config_err(key, format!("`{x}` is not a number")))
        })
        .collect()
}

impl Cli {
    fn into_parts(self) -> Result<(Option<PathBuf>, ConfigFile), ConfigError> {
        let flags = ConfigFile {
            subcommand: self.subcommand,
            alpha: self.alpha,
            a: self.a,
            alpha_hat: self.alpha_hat,
            n: self.n,
            max_jumps: self.max_jumps,
            epsilon: self.epsilon,
            horizon: self.horizon,
            t_s_grid: self.grid.as_deref().map(parse_grid).transpose()?,
            replicates: self.replicates,
            master_seed: self.seed,
            workers: self.workers,
            output_path: self.output,
            lambdas: self
                .lambdas
                .as_deref()
                .map(|l| parse_list("lambdas", l))
                .transpose()?,
            process: self.process,
            convention: self.convention.map(|c| match c {
                ConventionFlag::Transition => JumpConvention::Transition,
                ConventionFlag::ValueChange => JumpConvention::ValueChange,
            }),
        };
        Ok((self.config, flags))
    }
}

/// Reads a JSON config file, rejecting unknown keys.
pub fn read_config_file(path: &Path) -> Result<ConfigFile, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_err("config", format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        let msg = e.to_string();
        // serde names the key in its message: "unknown field `foo`, expected ..."
        let key = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.contains("field"))
            .unwrap_or("config")
            .to_owned();
        ConfigError { key, message: msg }
    })
}

/// Merges file values with flag overrides and validates the result.
pub fn parse_config(
    file: Option<ConfigFile>,
    flags: ConfigFile,
) -> Result<ExperimentConfig, ConfigError> {
    let raw = file.unwrap_or_default().overlay(flags);
    resolve(raw)
}

fn check_unit(key: &str, v: Option<f64>) -> Result<(), ConfigError> {
    match v {
        Some(x) if !(x > 0.0 && x < 1.0) => {
            Err(config_err(key, format!("{x} is outside the range (0,1)")))
        }
        _ => Ok(()),
    }
}

fn check_pos(key: &str, v: Option<f64>) -> Result<(), ConfigError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => {
            Err(config_err(key, format!("{x} must be positive")))
        }
        _ => Ok(()),
    }
}

fn require<T: Copy>(key: &str, v: Option<T>, sub: Subcommand) -> Result<T, ConfigError> {
    v.ok_or_else(|| config_err(key, format!("required by `{}`", sub.name())))
}

fn resolve(raw: ConfigFile) -> Result<ExperimentConfig, ConfigError> {
    let sub = raw
        .subcommand
        .ok_or_else(|| config_err("subcommand", "missing; expected one of gen-env, sim-trap, sim-k, sim-zhat, laplace, aging, arcsine, selfsim"))?;
    check_unit("alpha", raw.alpha)?;
    check_unit("alpha_hat", raw.alpha_hat)?;
    let a = raw.a.unwrap_or(0.0);
    if !(0.0..=1.0).contains(&a) {
        return Err(config_err("a", format!("{a} is outside the range [0,1]")));
    }
    check_pos("epsilon", raw.epsilon)?;
    check_pos("horizon", raw.horizon)?;
    if raw.n == Some(0) {
        return Err(config_err("n", "must be at least 1"));
    }
    if raw.replicates == Some(0) {
        return Err(config_err("replicates", "must be at least 1"));
    }
    if raw.workers == Some(0) {
        return Err(config_err("workers", "must be at least 1"));
    }
    if raw.max_jumps == Some(0) {
        return Err(config_err("max_jumps", "must be at least 1"));
    }
    let grid = raw.t_s_grid.clone().unwrap_or_default();
    if let Some((t, s)) = grid
        .iter()
        .find(|(t, s)| !(*t > 0.0 && *s > 0.0 && t.is_finite() && s.is_finite()))
    {
        return Err(config_err(
            "t_s_grid",
            format!("pair ({t}, {s}) must be positive"),
        ));
    }
    let lambdas = raw
        .lambdas
        .clone()
        .unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec());
    if lambdas.is_empty()
        || lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite()))
        || lambdas.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(config_err(
            "lambdas",
            "must be a nonempty, nonnegative, strictly increasing list",
        ));
    }
    if raw.alpha.is_some() && a >= 1.0 && matches!(sub, Subcommand::SimZhat | Subcommand::Selfsim) {
        return Err(config_err("a", "must be below 1 for the limit process"));
    }

    let needs_limit_index = matches!(
        sub,
        Subcommand::SimZhat | Subcommand::Selfsim | Subcommand::Arcsine
    ) || (sub == Subcommand::Aging
        && raw.process == Some(AgingProcess::Zhat));
    match sub {
        Subcommand::GenEnv => {
            require("alpha", raw.alpha, sub)?;
        }
        Subcommand::SimTrap => {
            require("alpha", raw.alpha, sub)?;
            require("n", raw.n, sub)?;
            require("horizon", raw.horizon, sub)?;
        }
        Subcommand::SimK => {
            require("alpha", raw.alpha, sub)?;
            require("horizon", raw.horizon, sub)?;
        }
        Subcommand::SimZhat => {
            require("horizon", raw.horizon, sub)?;
        }
        Subcommand::Laplace => {
            require("alpha", raw.alpha, sub)?;
        }
        Subcommand::Aging => {
            if raw.process.unwrap_or_default() == AgingProcess::K {
                require("alpha", raw.alpha, sub)?;
                require("epsilon", raw.epsilon, sub)?;
            }
            if grid.is_empty() {
                return Err(config_err("t_s_grid", "required by `aging`"));
            }
        }
        Subcommand::Arcsine => {
            if grid.is_empty() {
                return Err(config_err("t_s_grid", "required by `arcsine`"));
            }
        }
        Subcommand::Selfsim => {}
    }
    if needs_limit_index && raw.alpha_hat.is_none() {
        let alpha = raw.alpha.ok_or_else(|| {
            config_err(
                "alpha_hat",
                format!("`{}` needs alpha_hat or alpha", sub.name()),
            )
        })?;
        if a >= alpha {
            return Err(config_err(
                "a",
                format!("a = {a} >= alpha = {alpha}: the self-similar limit does not exist (interrupted aging)"),
            ));
        }
    }

    let workers = raw.workers.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    Ok(ExperimentConfig {
        subcommand: sub,
        alpha: raw.alpha,
        a,
        alpha_hat: raw.alpha_hat,
        n: raw.n,
        max_jumps: raw.max_jumps.unwrap_or(DEFAULT_MAX_JUMPS),
        epsilon: raw.epsilon,
        horizon: raw.horizon,
        t_s_grid: grid,
        replicates: raw.replicates.unwrap_or(DEFAULT_REPLICATES),
        master_seed: raw.master_seed.unwrap_or(0),
        workers,
        output_path: PathBuf::from(raw.output_path.unwrap_or_else(|| DEFAULT_OUTPUT.to_owned())),
        lambdas,
        process: raw.process.unwrap_or_default(),
        convention: raw.convention.unwrap_or_default(),
    })
}

impl ExperimentConfig {
    /// `(α̂, ĉ)` of the limit process: from `alpha` and `a` when `alpha` is
    /// set, else from `alpha_hat` alone with `ĉ = Γ(1-α̂)` (the `a = 0` case).
    pub fn limit_constants(&self) -> Result<(f64, f64), Error> {
        match (self.alpha_hat, self.alpha) {
            (Some(ah), None) => Ok((ah, gamma(1.0 - ah))),
            (_, Some(alpha)) => {
                let ah = alpha_hat(alpha, self.a)?.nondegenerate()?;
                Ok((ah, c_hat(alpha, self.a)?))
            }
            (None, None) => Err(Error::param("alpha_hat", "alpha or alpha_hat is required")),
        }
    }

    fn alpha(&self) -> Result<f64, Error> {
        self.alpha.ok_or(Error::param("alpha", "required"))
    }

    fn environment_seed(&self) -> u64 {
        mix64(self.master_seed, STREAM_ENVIRONMENT)
    }

    fn dynamics_seed(&self) -> u64 {
        mix64(self.master_seed, STREAM_DYNAMICS)
    }

    fn max_window_end(&self) -> f64 {
        self.t_s_grid.iter().map(|(t, s)| t + s).fold(0.0, f64::max)
    }
}

/// Files produced by a run, plus diagnostics for the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub files: Vec<(String, Vec<u8>)>,
    pub diagnostics: serde_json::Value,
    pub summary: String,
}

fn csv_bytes<F>(write: F) -> Vec<u8>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to memory");
    buf
}

fn field_diagnostics(field: &JumpField) -> serde_json::Value {
    json!({
        "retained_jumps": field.len(),
        "smallest_jump": field.sizes().last(),
        "total_mass": field.total_mass(),
        "tail_mass": if field.tail_mass().is_finite() { Some(field.tail_mass()) } else { None },
    })
}

/// Executes the configured subcommand and returns its outputs without
/// touching the filesystem.
pub fn execute(config: &ExperimentConfig) -> Result<RunOutput, Error> {
    with_workers(config.workers, || match config.subcommand {
        Subcommand::GenEnv => run_gen_env(config),
        Subcommand::SimTrap => run_sim_trap(config),
        Subcommand::SimK => run_sim_k(config),
        Subcommand::SimZhat => run_sim_zhat(config),
        Subcommand::Laplace => run_laplace(config),
        Subcommand::Aging => run_aging(config),
        Subcommand::Arcsine => run_arcsine(config),
        Subcommand::Selfsim => run_selfsim(config),
    })
}

fn run_gen_env(config: &ExperimentConfig) -> Result<RunOutput, Error> {
    let alpha = config.alpha()?;
    let seed = config.environment_seed();
    if let Some(n) = config.n {
        let env = sample_pareto_env(n, alpha, config.a, seed)?;
        let body = serde_json::to_vec_pretty(&env).expect("environment serializes");
        Ok(RunOutput {
            files: vec![("gen-env.json".to_owned(), body)],
            diagnostics: json!({ "kind": "environment", "c_n": env.c_n() }),
            summary: format!("environment with n = {n}, c_n = {:e}", env.c_n()),
        })
    } else {
        let field = sample_stable_jumps(alpha, 1.0, config.max_jumps, 1.0, seed)?;
        let body = serde_json::to_vec_pretty(&field).expect("jump field serializes");
        Ok(RunOutput {
            files: vec![("gen-env.json".to_owned(), body)],
            diagnostics: json!({ "kind": "jump-field", "field": field_diagnostics(&field) }),
            summary: format!(
                "jump field with {} jumps, tail mass {:e}",
                field.len(),
                field.tail_mass()
            ),
        })
    }
}

fn run_sim_trap(config: &ExperimentConfig) -> Result<RunOutput, Error> {
    let alpha = config.alpha()?;
    let n = config.n.ok_or(Error::param("n", "required"))?;
    let horizon = config.horizon.ok_or(Error::param("horizon", "required"))?;
    let env = sample_pareto_env(n, alpha, config.a, config.environment_seed())?;
    // horizon is in rescaled units
    let raw = simulate_trap_path(
        &env,
        trap_horizon_for(horizon, env.c_n(), config.a),
        config.dynamics_seed(),
    )?;
    let path = rescale_trap_path(&raw, env.c_n(), config.a)?;
    Ok(RunOutput {
        files: vec![("sim-trap.csv".to_owned(), path.to_csv_string().into_bytes())],
        diagnostics: json!({ "c_n": env.c_n(), "events": path.events().len() }),
        summary: format!("{} events on [0, {horizon}]", path.events().len()),
    })
}

fn run_sim_k(config: &ExperimentConfig) -> Result<RunOutput, Error> {
    let alpha = config.alpha()?;
    let horizon = config.horizon.ok_or(Error::param("horizon", "required"))?;
    let field = sample_stable_jumps(alpha, 1.0, config.max_jumps, 1.0, config.environment_seed())?;
    let path = match config.epsilon {
        Some(eps) => rescale_small_time(
            &simulate_k_path(&field, config.a, eps * horizon, config.dynamics_seed())?,
            eps,
        )?,
        None => simulate_k_path(&field, config.a, horizon, config.dynamics_seed())?,
    };
    Ok(RunOutput {
        files: vec![("sim-k.csv".to_owned(), path.to_csv_string().into_bytes())],
        diagnostics: json!({ "field": field_diagnostics(&field), "events": path.events().len() }),
        summary: format!("{} events on [0, {horizon}]", path.events().len()),
    })
}

fn run_sim_zhat(config: &ExperimentConfig) -> Result<RunOutput, Error> {
    let (ah, ch) = config.limit_constants()?;
    let horizon = config.horizon.ok_or(Error::param("horizon", "required"))?;
    let sample = simulate_zhat(ah, ch, horizon, config.max_jumps, config.dynamics_seed())?;
    Ok(RunOutput {
        files: vec![(
            "sim-zhat.csv".to_owned(),
            sample.path.to_csv_string().into_bytes(),
        )],
        diagnostics: json!({
            "alpha_hat": ah,
            "c_hat": ch,
            "window": sample.window,
            "threshold": sample.threshold,
            "events": sample.path.events().len(),
        }),
        summary: format!(
            "alpha_hat = {ah}, c_hat = {ch:.10}, {} events on [0, {horizon}]",
            sample.path.events().len()
        ),
    })
}

fn run_laplace(config: &ExperimentConfig) -> Result<RunOutput, Error> {
    let alpha = config.alpha()?;
    let a = config.a;
    let lambdas = &config.lambdas;
    let mut curves = Vec::new();
    let mut diagnostics = serde_json::Map::new();
    if let Some(n) = config.n {
        let env = sample_pareto_env(n, alpha, a, config.environment_seed())?;
        curves.push(LaplaceCurve::evaluate(CurveLabel::FiniteN, lambdas, |l| {
            Ok(finite_n_laplace(&env, l))
        })?);
        diagnostics.insert("c_n".into(), json!(env.c_n()));
    }
    let field = sample_stable_jumps(
        alpha,
        1.0,
        config.max_jumps,
        1.0,
        mix64(config.environment_seed(), 1),
    )?;
    curves.push(LaplaceCurve::evaluate(
        CurveLabel::JumpField,
        lambdas,
        |l| Ok(jump_field_laplace(&field, a, l)),
    )?);
    diagnostics.insert("field".into(), field_diagnostics(&field));
    let index = if a < 1.0 {
        Some(alpha_hat(alpha, a)?)
    } else {
        None
    };
    if let Some(ah) = index.filter(|ah| !ah.is_degenerate()) {
        if let Some(eps) = config.epsilon {
            curves.push(LaplaceCurve::evaluate(
                CurveLabel::Rescaled,
                lambdas,
                |l| rescaled_laplace(&field, a, eps, l),
            )?);
        }
        let ch = c_hat(alpha, a)?;
        curves.push(LaplaceCurve::evaluate(CurveLabel::Limit, lambdas, |l| {
            Ok(limit_laplace(ch, ah.value(), l))
        })?);
        diagnostics.insert("alpha_hat".into(), json!(ah.value()));
        diagnostics.insert("c_hat".into(), json!(ch));
    }
    let labels: Vec<_> = curves.iter().map(|c| c.label.as_str()).collect();
    Ok(RunOutput {
        files: vec![(
            "laplace.csv".to_owned(),
            csv_bytes(|b| write_laplace_csv(&curves, b)),
        )],
        diagnostics: serde_json::Value::Object(diagnostics),
        summary: format!("curves: {}", labels.join(", ")),
    })
}

/// Per-grid-point hit counts for Π, R and Q.
fn tally_aging<F>(config: &ExperimentConfig, sample_path: F) -> Result<Vec<[usize; 3]>, Error>
where
    F: Fn(u64) -> Result<StepPath, Error> + Sync + Send,
{
    let grid = &config.t_s_grid;
    let per_replicate = replicate(config.replicates, config.master_seed, |_, seed| {
        let path = sample_path(seed)?;
        grid.iter()
            .map(|&(t, s)| {
                Ok([
                    pi_hit(&path, t, s, config.convention)? as usize,
                    r_hit(&path, t, s)? as usize,
                    q_hit(&path, t, s)? as usize,
                ])
            })
            .collect::<Result<Vec<[usize; 3]>, Error>>()
    });
    let mut totals = vec![[0usize; 3]; grid.len()];
    for hits in per_replicate {
        for (acc, h) in totals.iter_mut().zip(hits?) {
            for k in 0..3 {
                acc[k] += h[k];
            }
        }
    }
    Ok(totals)
}

fn aging_rows(
    config: &ExperimentConfig,
    totals: &[[usize; 3]],
    index: Option<f64>,
) -> Result<Vec<AgingRow>, Error> {
    let mut rows = Vec::new();
    for (&(t, s), hits) in config.t_s_grid.iter().zip(totals) {
        let oracle = oracle_for(t, s, index)?;
        let reps = config.replicates;
        rows.push(AgingRow {
            kind: AgingKind::Pi,
            estimate: AgingEstimate::from_hits(t, s, hits[0], reps, oracle),
        });
        rows.push(AgingRow {
            kind: AgingKind::R,
            estimate: AgingEstimate::from_hits(t, s, hits[1], reps, oracle),
        });
        rows.push(AgingRow {
            kind: AgingKind::Q,
            estimate: AgingEstimate::from_hits(t, s, hits[2], reps, None),
        });
    }
    Ok(rows)
}

fn summarize_rows(rows: &[AgingRow]) -> String {
    rows.iter()
        .map(|r| {
            let e = &r.estimate;
            let oracle = e
                .oracle
                .map(|o| format!(" (oracle {o:.4})"))
                .unwrap_or_default();
            format!(
                "{} t={} s={}: {:.4} ± {:.4}{oracle}",
                r.kind.as_str(),
                e.t,
                e.s,
                e.estimate,
                e.stderr
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn run_aging(config: &ExperimentConfig) -> Result<RunOutput, Error> {
    let horizon = config.max_window_end();
    let (rows, diagnostics) = match config.process {
        AgingProcess::K => {
            let alpha = config.alpha()?;
            let eps = config.epsilon.ok_or(Error::param("epsilon", "required"))?;
            let field =
                sample_stable_jumps(alpha, 1.0, config.max_jumps, 1.0, config.environment_seed())?;
            let index = if config.a < 1.0 {
                Some(alpha_hat(alpha, config.a)?)
                    .filter(|ah| !ah.is_degenerate())
                    .map(|ah| ah.value())
            } else {
                None
            };
            let totals = tally_aging(config, |seed| {
                rescale_small_time(
                    &simulate_k_path(&field, config.a, eps * horizon, seed)?,
                    eps,
                )
            })?;
            (
                aging_rows(config, &totals, index)?,
                json!({ "process": "k", "alpha_hat": index, "field": field_diagnostics(&field) }),
            )
        }
        AgingProcess::Zhat => {
            let (ah, ch) = config.limit_constants()?;
            let totals = tally_aging(config, |seed| {
                Ok(simulate_zhat(ah, ch, horizon, config.max_jumps, seed)?.path)
            })?;
            (
                aging_rows(config, &totals, Some(ah))?,
                json!({ "process": "zhat", "alpha_hat": ah, "c_hat": ch }),
            )
        }
    };
    Ok(RunOutput {
        files: vec![(
            "aging.csv".to_owned(),
            csv_bytes(|b| write_aging_csv(&rows, b)),
        )],
        diagnostics,
        summary: summarize_rows(&rows),
    })
}

fn run_arcsine(config: &ExperimentConfig) -> Result<RunOutput, Error> {
    let ah = match config.alpha_hat {
        Some(ah) => ah,
        None => alpha_hat(config.alpha()?, config.a)?.nondegenerate()?,
    };
    let rows = config
        .t_s_grid
        .iter()
        .map(|&(t, s)| {
            let v = arcsine_pi(t, s, ah)?;
            Ok(AgingRow {
                kind: AgingKind::Arcsine,
                estimate: AgingEstimate {
                    t,
                    s,
                    estimate: v,
                    stderr: 0.0,
                    replicates: 0,
                    oracle: Some(v),
                },
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(RunOutput {
        files: vec![(
            "arcsine.csv".to_owned(),
            csv_bytes(|b| write_aging_csv(&rows, b)),
        )],
        diagnostics: json!({ "alpha_hat": ah }),
        summary: summarize_rows(&rows),
    })
}

/// Time points compared by `selfsim`: `Ẑ_t` against `c^{-1} Ẑ_{ct}`.
const SELFSIM_T: f64 = 1.0;
const SELFSIM_C: f64 = 2.0;

/// Independent samples of `Ẑ_1` and `Ẑ_2 / 2`.
pub fn selfsim_samples(
    alpha_hat: f64,
    c_hat: f64,
    max_jumps: usize,
    replicates: usize,
    master_seed: u64,
) -> Result<(Vec<f64>, Vec<f64>), Error> {
    let pairs = replicate(replicates, master_seed, |_, seed| {
        let near = simulate_zhat(alpha_hat, c_hat, SELFSIM_T, max_jumps, mix64(seed, 1))?;
        let far = simulate_zhat(
            alpha_hat,
            c_hat,
            SELFSIM_C * SELFSIM_T,
            max_jumps,
            mix64(seed, 2),
        )?;
        Ok((
            near.path.value_at(SELFSIM_T)?,
            far.path.value_at(SELFSIM_C * SELFSIM_T)? / SELFSIM_C,
        ))
    });
    let pairs = pairs.into_iter().collect::<Result<Vec<_>, Error>>()?;
    Ok(pairs.into_iter().unzip())
}

fn run_selfsim(config: &ExperimentConfig) -> Result<RunOutput, Error> {
    let (ah, ch) = config.limit_constants()?;
    let (near, far) = selfsim_samples(
        ah,
        ch,
        config.max_jumps,
        config.replicates,
        config.master_seed,
    )?;
    let ks = ks_statistic(&near, &far)?;
    let body = format!(
        "t,c,replicates,ks\n{},{},{},{}\n",
        crate::path::format_sig(SELFSIM_T),
        crate::path::format_sig(SELFSIM_C),
        config.replicates,
        crate::path::format_sig(ks)
    );
    Ok(RunOutput {
        files: vec![("selfsim.csv".to_owned(), body.into_bytes())],
        diagnostics: json!({ "alpha_hat": ah, "c_hat": ch, "ks": ks }),
        summary: format!(
            "KS(Z_1, Z_2 / 2) = {ks:.5} over {} replicates",
            config.replicates
        ),
    })
}

/// Output directory after applying the environment override.
pub fn output_dir(config: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => config.output_path.clone(),
    }
}

/// Writes all files or none: everything goes to temporary names first and
/// is renamed once every write succeeded.
fn write_outputs(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<PathBuf>, RunError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let cleanup = |staged: &[(PathBuf, PathBuf)]| {
        for (tmp, _) in staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for (name, bytes) in files {
        let target = dir.join(name);
        let tmp = dir.join(format!(".{name}.partial"));
        let written =
            fs::File::create(&tmp).and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()));
        if let Err(e) = written {
            let _ = fs::remove_file(&tmp);
            cleanup(&staged);
            return Err(io(&tmp)(e));
        }
        staged.push((tmp, target));
    }
    let mut done = Vec::new();
    for (tmp, target) in &staged {
        if let Err(e) = fs::rename(tmp, target) {
            cleanup(&staged);
            for d in &done {
                let _ = fs::remove_file(d);
            }
            return Err(io(target)(e));
        }
        done.push(target.clone());
    }
    Ok(done)
}

/// Runs `config` and writes its data files and manifest.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let started = Instant::now();
    let mut output = execute(config)?;
    let dir = output_dir(config);
    let manifest = json!({
        "tool": "ktrap",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "seed_derivation": "replicate i uses mix64(master_seed, i) = splitmix64(master_seed ^ splitmix64(i)); ChaCha8 streams via seed_from_u64",
        "outputs": output.files.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
        "diagnostics": output.diagnostics,
        "wall_time_seconds": started.elapsed().as_secs_f64(),
    });
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    manifest_bytes.push(b'\n');
    output.files.push((
        format!("{}.manifest.json", config.subcommand.name()),
        manifest_bytes,
    ));
    write_outputs(&dir, &output.files)?;
    Ok(output)
}

/// Entry point shared by the binary and the CLI tests; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = cli
        .into_parts()
        .and_then(|(file, flags)| {
            let file = file.as_deref().map(read_config_file).transpose()?;
            parse_config(file, flags)
        })
        .map_err(RunError::from)
        .and_then(|config| run_experiment(&config));
    match result {
        Ok(out) => {
            println!("{}", out.summary);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("ktrap: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(sub: Subcommand) -> ConfigFile {
        ConfigFile {
            subcommand: Some(sub),
            ..ConfigFile::default()
        }
    }

    #[test]
    fn minimal_aging_config_accepted() {
        let file: ConfigFile = serde_json::from_str(
            r#"{"subcommand":"aging","alpha":0.5,"a":0,"epsilon":0.001,"replicates":20000,"t_s_grid":[[1,1]],"master_seed":7}"#,
        )
        .unwrap();
        let cfg = parse_config(Some(file), ConfigFile::default()).unwrap();
        assert_eq!(cfg.subcommand, Subcommand::Aging);
        assert_eq!(cfg.replicates, 20000);
        assert_eq!(cfg.t_s_grid, vec![(1.0, 1.0)]);
        assert_eq!(cfg.master_seed, 7);
    }

    #[test]
    fn alpha_out_of_range_names_key() {
        let mut f = flags(Subcommand::Laplace);
        f.alpha = Some(1.2);
        let err = parse_config(None, f).unwrap_err();
        assert_eq!(err.key, "alpha");
        assert!(err.message.contains("(0,1)"));
    }

    #[test]
    fn flags_override_file() {
        let file = ConfigFile {
            replicates: Some(20000),
            alpha_hat: Some(0.5),
            t_s_grid: Some(vec![(1.0, 1.0)]),
            ..flags(Subcommand::Arcsine)
        };
        let over = ConfigFile {
            replicates: Some(100),
            ..ConfigFile::default()
        };
        assert_eq!(parse_config(Some(file), over).unwrap().replicates, 100);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = serde_json::from_str::<ConfigFile>(r#"{"subcommand":"aging","alpah":0.5}"#)
            .unwrap_err();
        assert!(err.to_string().contains("alpah"));
    }

    #[test]
    fn missing_required_field() {
        let err = parse_config(None, flags(Subcommand::SimTrap)).unwrap_err();
        assert_eq!(err.key, "alpha");
        let err = parse_config(None, ConfigFile::default()).unwrap_err();
        assert_eq!(err.key, "subcommand");
        let mut f = flags(Subcommand::Selfsim);
        f.alpha = Some(0.4);
        f.a = Some(0.6);
        assert_eq!(parse_config(None, f).unwrap_err().key, "a");
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(
            parse_grid("1:1, 2:0.5").unwrap(),
            vec![(1.0, 1.0), (2.0, 0.5)]
        );
        assert!(parse_grid("1-1").is_err());
        assert!(parse_grid("1:x").is_err());
    }

    #[test]
    fn arcsine_run_reports_half() {
        let mut f = flags(Subcommand::Arcsine);
        f.alpha_hat = Some(0.5);
        f.t_s_grid = Some(vec![(1.0, 1.0)]);
        let cfg = parse_config(None, f).unwrap();
        let out = execute(&cfg).unwrap();
        let text = String::from_utf8(out.files[0].1.clone()).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "1.00000000000,1.00000000000,1.00000000000,arcsine,0.500000000000,0,0,0.500000000000"
        );
    }
}
