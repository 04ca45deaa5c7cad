//! The `sdbli` command line: argument model, commands and exit codes.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::check::{run_check_suite, CheckOptions, CheckReport};
use crate::config::ExperimentConfig;
use crate::diagnostics::{
    check_monotonicity, check_summability, monte_carlo, noise_sweep, SummabilityInputs,
};
use crate::error::SdbliError;
use crate::experiment::{generate, Experiment, GeneratedData};
use crate::io::{
    grid_to_csv, read_json, summary_to_csv, sweep_to_csv, trace_to_csv, write_json,
    ExactEnvelope, NoisyEnvelope, OperatorEnvelope, TrainingEnvelope,
};
use crate::solver::{run_sdbli, validate_trace, AdmissibilityReport, StopReason};
use crate::system::EstimatedConstants;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISSING_INPUT: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "sdbli", version, about = "Stochastic data-driven Bouligand-Landweber iteration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}


#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write truth, exact and noisy data, training set and a manifest.
    Generate(CommonArgs),
    /// Run one iteration and write its trace.
    Solve(CommonArgs),
    /// Monte Carlo replications, diagnostic reports and the noise sweep.
    Mc(CommonArgs),
    /// Run the property suites on small self-generated instances.
    Check(CheckArgs),
}

#[derive(Debug, clap::Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory holding `generate` output; defaults to the output directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Overrides `output.directory`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Start the iteration at the true source instead of zero.
    #[arg(long)]
    pub start_at_truth: bool,
    /// Overrides the solver's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, clap::Args)]
pub struct CheckArgs {
    /// Accepted for symmetry with the other commands; only `--seed` matters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Test hook: flips the sign of the adjoint so the suite must fail.
    #[arg(long)]
    pub break_adjoint: bool,
}

/// A failure carrying its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    fn missing(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::new(EXIT_MISSING_INPUT, format!("cannot read {}: {err}", path.display()))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<SdbliError> for CliError {
    fn from(e: SdbliError) -> Self {
        let code = match &e {
            SdbliError::Config { .. } => EXIT_CONFIG,
            SdbliError::Parse(_) => EXIT_MISSING_INPUT,
            _ => EXIT_SOLVER,
        };
        CliError::new(code, e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Dispatches a parsed command. Output paths are returned for logging.
pub fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Mc(a) => cmd_mc(&a),
        Command::Check(a) => {
            let report = cmd_check(&a)?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(SdbliError::from)?);
            if report.passed {
                Ok(Vec::new())
            } else {
                Err(CliError::new(
                    EXIT_INVARIANT,
                    format!("failed suites: {}", report.failed_suites().join(", ")),
                ))
            }
        }
    }
}

pub fn load_config(args: &CommonArgs) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| CliError::missing(&args.config, e))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = args.seed {
        cfg.solver.seed = seed;
    }
    Ok(cfg)
}

/// Names of the files written by `generate`, keyed by role.
pub struct DataFiles {
    pub truth: PathBuf,
    pub exact: PathBuf,
    pub noisy: PathBuf,
    pub training: PathBuf,
    pub manifest: PathBuf,
}

impl DataFiles {
    pub fn new(dir: &Path, prefix: &str) -> Self {
        let f = |s: &str| dir.join(format!("{prefix}_{s}"));
        DataFiles {
            truth: f("truth.csv"),
            exact: f("exact.json"),
            noisy: f("noisy.json"),
            training: f("training.json"),
            manifest: f("manifest.json"),
        }
    }
}

fn out_dir(args: &CommonArgs, cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    std::fs::create_dir_all(&dir).map_err(SdbliError::from)?;
    Ok(dir)
}

fn data_dir(args: &CommonArgs, cfg: &ExperimentConfig) -> PathBuf {
    args.data
        .clone()
        .or_else(|| args.out.clone())
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory))
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Serialize)]
struct Manifest<'a> {
    files: Vec<String>,
    truth_seed: u64,
    noise_seed: u64,
    training_seed: u64,
    training_pair_seeds: &'a [u64],
    estimation_seed: u64,
    solver_seed: u64,
    config: &'a ExperimentConfig,
}

pub fn cmd_generate(args: &CommonArgs) -> CliResult<Vec<PathBuf>> {
    let cfg = load_config(args)?;
    let data = generate(&cfg)?;
    let dir = out_dir(args, &cfg)?;
    let files = DataFiles::new(&dir, &cfg.output.prefix);
    let spec = cfg.spec()?;
    let write = |p: &Path, text: String| std::fs::write(p, text).map_err(SdbliError::from);
    write(&files.truth, grid_to_csv(&data.exact.u_true))?;
    write_json(&files.exact, &ExactEnvelope::new(&data.exact, cfg.system.scheme, cfg.truth.seed))?;
    write_json(&files.noisy, &NoisyEnvelope::new(&data.noisy, spec))?;
    write_json(&files.training, &TrainingEnvelope::new(&data.training, spec, cfg.training.seed))?;
    let listed = [&files.truth, &files.exact, &files.noisy, &files.training, &files.manifest];
    write_json(
        &files.manifest,
        &Manifest {
            files: listed.iter().map(|p| file_name(p)).collect(),
            truth_seed: cfg.truth.seed,
            noise_seed: cfg.noise.seed,
            training_seed: cfg.training.seed,
            training_pair_seeds: &data.training.seeds,
            estimation_seed: cfg.estimation.seed,
            solver_seed: cfg.solver.seed,
            config: &cfg,
        },
    )?;
    Ok(listed.into_iter().cloned().collect())
}

/// Reads what `generate` wrote and checks it matches the config's shape.
pub fn load_data(dir: &Path, cfg: &ExperimentConfig) -> CliResult<GeneratedData> {
    let files = DataFiles::new(dir, &cfg.output.prefix);
    let read = |p: &Path| -> CliResult<()> {
        if p.is_file() {
            Ok(())
        } else {
            Err(CliError::missing(p, "no such file"))
        }
    };
    read(&files.exact)?;
    read(&files.noisy)?;
    read(&files.training)?;
    let exact: ExactEnvelope = read_json(&files.exact).map_err(|e| CliError::missing(&files.exact, e))?;
    let noisy: NoisyEnvelope = read_json(&files.noisy).map_err(|e| CliError::missing(&files.noisy, e))?;
    let training: TrainingEnvelope =
        read_json(&files.training).map_err(|e| CliError::missing(&files.training, e))?;
    let (n, p) = (cfg.grid.n, cfg.system.p);
    if exact.n != n || noisy.n != n || training.n != n || exact.p != p || noisy.p != p || training.p != p {
        return Err(CliError::new(
            EXIT_MISSING_INPUT,
            format!("data in {} does not match grid.n = {n}, system.P = {p}", dir.display()),
        ));
    }
    if exact.scheme != cfg.system.scheme {
        return Err(CliError::new(
            EXIT_MISSING_INPUT,
            format!("data in {} uses a different partition scheme", dir.display()),
        ));
    }
    let bad = |e: SdbliError| CliError::new(EXIT_MISSING_INPUT, e.to_string());
    Ok(GeneratedData {
        exact: exact.into_exact().map_err(bad)?,
        noisy: noisy.into_noisy().map_err(bad)?,
        training: training.into_training().map_err(bad)?,
    })
}

fn build_experiment(args: &CommonArgs) -> CliResult<(ExperimentConfig, Experiment, PathBuf)> {
    let cfg = load_config(args)?;
    let data = load_data(&data_dir(args, &cfg), &cfg)?;
    let experiment = Experiment::from_data(&cfg, data, args.start_at_truth)?;
    let dir = out_dir(args, &cfg)?;
    Ok((cfg, experiment, dir))
}

#[derive(Serialize)]
pub struct TraceSidecar<'a> {
    pub config: &'a ExperimentConfig,
    pub constants: EstimatedConstants,
    pub admissibility: AdmissibilityReport,
    pub sigma: f64,
    pub lambda_max: f64,
    pub stop_reason: StopReason,
    pub k_stop: usize,
    pub final_err: Option<f64>,
    pub final_system_residual_sq: f64,
    pub start_at_truth: bool,
    pub contract_violations: Vec<String>,
}

pub fn cmd_solve(args: &CommonArgs) -> CliResult<Vec<PathBuf>> {
    let (cfg, ex, dir) = build_experiment(args)?;
    let scfg = ex.solver_config();
    let problem = ex.problem();
    let trace = run_sdbli(&ex.u0, &problem, &scfg, ex.delta_total())?;
    let prefix = &cfg.output.prefix;
    let csv = dir.join(format!("{prefix}_trace.csv"));
    let json = dir.join(format!("{prefix}_trace.json"));
    let final_u = dir.join(format!("{prefix}_final_u.csv"));
    let ops = dir.join(format!("{prefix}_operators.json"));
    std::fs::write(&csv, trace_to_csv(&trace)).map_err(SdbliError::from)?;
    std::fs::write(&final_u, grid_to_csv(&trace.final_u)).map_err(SdbliError::from)?;
    let envelopes: Vec<OperatorEnvelope> = ex.operators.iter().map(OperatorEnvelope::new).collect();
    write_json(&ops, &envelopes)?;
    write_json(
        &json,
        &TraceSidecar {
            config: &cfg,
            constants: ex.constants,
            admissibility: ex.admissibility(),
            sigma: ex.sigma,
            lambda_max: trace.lambda_max,
            stop_reason: trace.stop_reason,
            k_stop: trace.k_stop,
            final_err: trace.final_err,
            final_system_residual_sq: trace.final_system_residual_sq,
            start_at_truth: args.start_at_truth,
            contract_violations: validate_trace(&trace, &problem.data.deltas, &scfg)
                .err()
                .unwrap_or_default(),
        },
    )?;
    Ok(vec![csv, json, final_u, ops])
}

#[derive(Serialize)]
struct McSidecar<'a> {
    config: &'a ExperimentConfig,
    constants: EstimatedConstants,
    admissibility: AdmissibilityReport,
    sigma: f64,
    replications: usize,
    monotonicity: crate::diagnostics::MonotonicityReport,
    summability: crate::diagnostics::SummabilityReport,
    stop_reasons: &'a [StopReason],
    contract_violations: &'a [String],
}

/// Writes the summary and reports, then fails with exit code 1 when a
/// statistical check or the trace validator flagged a violation.
pub fn cmd_mc(args: &CommonArgs) -> CliResult<Vec<PathBuf>> {
    let (cfg, ex, dir) = build_experiment(args)?;
    let scfg = ex.solver_config();
    let summary = monte_carlo(
        &ex.u0,
        &ex.problem(),
        &scfg,
        ex.delta_total(),
        cfg.diagnostics.replications,
        cfg.diagnostics.record_period,
    )?;
    let admissibility = ex.admissibility();
    let monotonicity = if summary.mean_sq_err.is_empty() {
        return Err(CliError::new(EXIT_SOLVER, "replications recorded no error to the truth"));
    } else {
        check_monotonicity(&summary, cfg.diagnostics.slack)?
    };
    let init = ex.u0.sub(ex.truth())?.norm();
    let summability = check_summability(
        &summary,
        &SummabilityInputs {
            initial_dist_sq: init * init,
            c_tilde_f: admissibility.c_tilde_f,
        },
    );
    let prefix = &cfg.output.prefix;
    let csv = dir.join(format!("{prefix}_mc.csv"));
    let json = dir.join(format!("{prefix}_mc.json"));
    std::fs::write(&csv, summary_to_csv(&summary)).map_err(SdbliError::from)?;
    let mut failures = Vec::new();
    if !monotonicity.passed() {
        failures.push("monotonicity");
    }
    if !summability.passed() {
        failures.push("summability");
    }
    if !summary.contract_violations.is_empty() {
        failures.push("trace contracts");
    }
    write_json(
        &json,
        &McSidecar {
            config: &cfg,
            constants: ex.constants,
            admissibility,
            sigma: ex.sigma,
            replications: summary.replications,
            monotonicity,
            summability,
            stop_reasons: &summary.stop_reasons,
            contract_violations: &summary.contract_violations,
        },
    )?;
    let mut written = vec![csv, json];
    if let Some(levels) = &cfg.noise.sweep {
        let reps = cfg.noise.sweep_replications.unwrap_or(cfg.diagnostics.replications);
        let table = noise_sweep(
            &ex.u0,
            |d| ex.problem_with_noise(d),
            &scfg,
            levels,
            reps,
            cfg.diagnostics.record_period,
        )?;
        let sweep_csv = dir.join(format!("{prefix}_sweep.csv"));
        let sweep_json = dir.join(format!("{prefix}_sweep.json"));
        std::fs::write(&sweep_csv, sweep_to_csv(&table)).map_err(SdbliError::from)?;
        write_json(&sweep_json, &table)?;
        if !table.non_increasing() {
            failures.push("noise sweep");
        }
        if !table.contract_violations.is_empty() {
            failures.push("sweep trace contracts");
        }
        written.extend([sweep_csv, sweep_json]);
    }
    if failures.is_empty() {
        Ok(written)
    } else {
        Err(CliError::new(
            EXIT_INVARIANT,
            format!("diagnostic checks failed: {}", failures.join(", ")),
        ))
    }
}

pub fn cmd_check(args: &CheckArgs) -> CliResult<CheckReport> {
    let mut seed = 0;
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::missing(path, e))?;
        seed = ExperimentConfig::from_json(&text)?.solver.seed;
    }
    if let Some(s) = args.seed {
        seed = s;
    }
    Ok(run_check_suite(CheckOptions {
        break_adjoint: args.break_adjoint,
        seed,
    })?)
}

/// Applies `SDBLI_THREADS` to the global thread pool.
pub fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("SDBLI_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::new(EXIT_CONFIG, format!("SDBLI_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::new(EXIT_CONFIG, e.to_string()))
}
