//! Command-line front end: resolve a run configuration from flags, an
//! optional TOML config file and environment fallbacks, execute one problem
//! or the whole benchmark suite, and emit per-iteration CSV plus a JSON
//! summary. All emitted files are byte-reproducible for a fixed
//! configuration and seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use rarc_core::problems::{self, ProblemInstance};
use rarc_core::solver::{self, GradientVariant, HessianVariant, RunResult, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NONCONVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Run(_) => EXIT_NONCONVERGED,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Run(m) => write!(f, "run error: {m}"),
        }
    }
}

/// Derivative mode of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Difference gradient + pullback difference Hessian.
    FdPullback,
    /// Difference gradient + exp/transport difference Hessian.
    FdTransport,
    /// Analytic gradient + transported gradient-difference Hessian.
    FdGradcalls,
    /// Analytic gradient and Hessian.
    Exact,
}

impl Mode {
    pub fn variants(self) -> (GradientVariant, HessianVariant) {
        match self {
            Mode::FdPullback => (GradientVariant::Fd, HessianVariant::Pullback),
            Mode::FdTransport => (GradientVariant::Fd, HessianVariant::Transport),
            Mode::FdGradcalls => (GradientVariant::Exact, HessianVariant::GradCalls),
            Mode::Exact => (GradientVariant::Exact, HessianVariant::Exact),
        }
    }
}

/// Benchmark problem selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    TopEig,
    Subspace,
    Elliptope,
    Tsvd,
    Swish,
    /// All five problems at their default desk sizes.
    Suite,
}

#[derive(Debug, Parser)]
#[command(
    name = "rarc",
    about = "Adaptive cubic-regularization solver benchmarks on matrix manifolds",
    disable_version_flag = true
)]
struct CliArgs {
    /// Problem to run.
    #[arg(long, value_enum)]
    problem: Option<ProblemKind>,
    /// Primary size (sphere dimension; first layer width for swish).
    #[arg(long)]
    n: Option<usize>,
    /// Row count r (second layer width for swish).
    #[arg(long)]
    r: Option<usize>,
    /// Second row count s (third layer width for swish).
    #[arg(long)]
    s: Option<usize>,
    /// Column count t (output width for swish).
    #[arg(long)]
    t: Option<usize>,
    /// Seed for data generation and the starting point.
    #[arg(long)]
    seed: Option<u64>,
    /// Initial regularization weight (> 0).
    #[arg(long)]
    sigma1: Option<f64>,
    /// Subproblem stationarity factor (>= 0).
    #[arg(long)]
    theta: Option<f64>,
    /// First-order tolerance on the surrogate gradient norm.
    #[arg(long = "eps-g")]
    eps_g: Option<f64>,
    /// Second-order tolerance on the smallest surrogate eigenvalue.
    #[arg(long = "eps-h")]
    eps_h: Option<f64>,
    /// Derivative mode.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Enforce the second-order progress condition and stopping rule.
    #[arg(long = "second-order")]
    second_order: bool,
    /// Outer iteration cap.
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Cap on the per-iteration doubling exponent.
    #[arg(long = "max-alpha")]
    max_alpha: Option<u32>,
    /// Output directory for CSV and JSON files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML config file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long = "dry-run")]
    dry_run: bool,
}

/// Optional config file contents; any subset of the flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    problem: Option<ProblemKind>,
    n: Option<usize>,
    r: Option<usize>,
    s: Option<usize>,
    t: Option<usize>,
    seed: Option<u64>,
    sigma1: Option<f64>,
    theta: Option<f64>,
    eps_g: Option<f64>,
    eps_h: Option<f64>,
    mode: Option<Mode>,
    second_order: Option<bool>,
    max_iters: Option<usize>,
    max_alpha: Option<u32>,
    out: Option<PathBuf>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub problem: ProblemKind,
    pub n: usize,
    pub r: usize,
    pub s: usize,
    pub t: usize,
    pub seed: u64,
    pub sigma1: f64,
    pub theta: f64,
    pub eps_g: f64,
    pub eps_h: Option<f64>,
    pub mode: Mode,
    pub second_order: bool,
    pub max_iters: usize,
    pub max_alpha: u32,
    pub out: PathBuf,
    pub dry_run: bool,
}

impl ResolvedConfig {
    pub fn solver_config(&self) -> SolverConfig {
        let (gradient_variant, hessian_variant) = self.mode.variants();
        SolverConfig {
            sigma1: self.sigma1,
            theta: self.theta,
            eps_g: self.eps_g,
            eps_h: self.eps_h,
            max_outer_iters: self.max_iters,
            max_alpha: self.max_alpha,
            second_order_mode: self.second_order,
            hessian_variant,
            gradient_variant,
            v0_norm: 1.0,
            seed: self.seed,
        }
    }
}

fn validate_field(ok: bool, field: &str, detail: String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(format!("invalid {field}: {detail}")))
    }
}

/// Resolve a configuration: flags override the config file, which overrides
/// the `RARC_SEED` environment fallback and the built-in defaults.
pub fn parse_config<I, T>(argv: I, env_seed: Option<u64>) -> Result<ResolvedConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = CliArgs::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config file {path:?}: {e}")))?;
            toml::from_str::<FileConfig>(&text)
                .map_err(|e| CliError::Usage(format!("bad config file: {e}")))?
        }
        None => FileConfig::default(),
    };

    let problem = args.problem.or(file.problem).unwrap_or(ProblemKind::Suite);
    let resolved = ResolvedConfig {
        problem,
        n: args.n.or(file.n).unwrap_or(default_n(problem)),
        r: args.r.or(file.r).unwrap_or(default_r(problem)),
        s: args.s.or(file.s).unwrap_or(default_s(problem)),
        t: args.t.or(file.t).unwrap_or(default_t(problem)),
        seed: args.seed.or(file.seed).or(env_seed).unwrap_or(2024),
        sigma1: args.sigma1.or(file.sigma1).unwrap_or(1.0),
        theta: args.theta.or(file.theta).unwrap_or(1.0),
        eps_g: args.eps_g.or(file.eps_g).unwrap_or(1e-8),
        eps_h: args.eps_h.or(file.eps_h),
        mode: args.mode.or(file.mode).unwrap_or(Mode::FdPullback),
        second_order: args.second_order || file.second_order.unwrap_or(false),
        max_iters: args.max_iters.or(file.max_iters).unwrap_or(1000),
        max_alpha: args.max_alpha.or(file.max_alpha).unwrap_or(60),
        out: args
            .out
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("rarc-out")),
        dry_run: args.dry_run,
    };

    validate_field(
        resolved.sigma1 > 0.0 && resolved.sigma1.is_finite(),
        "sigma1",
        format!("must be positive, got {}", resolved.sigma1),
    )?;
    validate_field(
        resolved.theta >= 0.0 && resolved.theta.is_finite(),
        "theta",
        format!("must be nonnegative, got {}", resolved.theta),
    )?;
    validate_field(
        resolved.eps_g > 0.0,
        "eps-g",
        format!("must be positive, got {}", resolved.eps_g),
    )?;
    if let Some(eh) = resolved.eps_h {
        validate_field(eh > 0.0, "eps-h", format!("must be positive, got {eh}"))?;
    }
    validate_field(
        !resolved.second_order || resolved.eps_h.is_some(),
        "eps-h",
        "required when --second-order is set".into(),
    )?;
    validate_field(
        resolved.max_alpha >= 1,
        "max-alpha",
        "must be at least 1".into(),
    )?;
    Ok(resolved)
}

fn default_n(p: ProblemKind) -> usize {
    match p {
        ProblemKind::Swish => 10,
        _ => 50,
    }
}

fn default_r(p: ProblemKind) -> usize {
    match p {
        ProblemKind::Tsvd => 8,
        ProblemKind::Swish => 20,
        _ => 12,
    }
}

fn default_s(p: ProblemKind) -> usize {
    match p {
        ProblemKind::Swish => 18,
        _ => 6,
    }
}

fn default_t(p: ProblemKind) -> usize {
    match p {
        ProblemKind::Swish => 16,
        ProblemKind::Tsvd => 3,
        _ => 4,
    }
}

fn build_instance(kind: ProblemKind, cfg: &ResolvedConfig) -> Result<ProblemInstance, CliError> {
    let build = match kind {
        ProblemKind::TopEig => problems::make_top_eigenvalue(cfg.n, cfg.seed),
        ProblemKind::Subspace => problems::make_dominant_subspace(cfg.r, cfg.t, cfg.seed),
        ProblemKind::Elliptope => problems::make_elliptope(cfg.r, cfg.t, cfg.seed),
        ProblemKind::Tsvd => problems::make_truncated_svd(cfg.r, cfg.s, cfg.t, cfg.seed),
        ProblemKind::Swish => {
            problems::make_swish_composite((cfg.n, cfg.r, cfg.s, cfg.t), cfg.seed)
        }
        ProblemKind::Suite => unreachable!("suite is expanded before instantiation"),
    };
    build.map_err(|e| CliError::Usage(format!("cannot build problem: {e}")))
}

/// Per-run summary row, mirroring the solver result without recomputation.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub problem_name: String,
    pub manifold_string: String,
    #[serde(rename = "OFV")]
    pub ofv: f64,
    pub g_norm_final: f64,
    pub iters: usize,
    pub f_evals: u64,
    /// Wall-clock time; excluded from the JSON so reruns are byte-identical.
    #[serde(skip)]
    pub wall_ms: u128,
    pub status: String,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    schema: u32,
    reports: &'a [RunReport],
}

/// 17 significant digits, enough to reproduce any f64 exactly.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_for(result: &RunResult) -> String {
    let mut out = String::from("k,f,g_norm,v_norm,sigma,alpha,h,h_clamped,f_evals_cum\n");
    for r in &result.history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.k,
            fmt_f64(r.f_val),
            fmt_f64(r.g_norm),
            fmt_f64(r.v_norm),
            fmt_f64(r.sigma_k),
            r.alpha_k,
            fmt_f64(r.h),
            u8::from(r.h_clamped),
            r.f_evals_cum,
        );
    }
    out
}

fn file_stem(kind: ProblemKind) -> &'static str {
    match kind {
        ProblemKind::TopEig => "top-eig",
        ProblemKind::Subspace => "subspace",
        ProblemKind::Elliptope => "elliptope",
        ProblemKind::Tsvd => "tsvd",
        ProblemKind::Swish => "swish",
        ProblemKind::Suite => "suite",
    }
}

/// The problems a selection expands to, in report order.
pub fn selected_problems(kind: ProblemKind) -> Vec<ProblemKind> {
    match kind {
        ProblemKind::Suite => vec![
            ProblemKind::TopEig,
            ProblemKind::Subspace,
            ProblemKind::Elliptope,
            ProblemKind::Tsvd,
            ProblemKind::Swish,
        ],
        one => vec![one],
    }
}

/// Execute the selected problems, writing one CSV per run plus
/// `summary.json` into the output directory. Returns the reports in
/// problem order.
pub fn run_benchmark(cfg: &ResolvedConfig) -> Result<Vec<RunReport>, CliError> {
    fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Io(format!("cannot create {:?}: {e}", cfg.out)))?;
    let mut reports = Vec::new();
    for kind in selected_problems(cfg.problem) {
        // Suite entries run at their own default desk sizes.
        let sized = if cfg.problem == ProblemKind::Suite {
            ResolvedConfig {
                n: default_n(kind),
                r: default_r(kind),
                s: default_s(kind),
                t: default_t(kind),
                ..cfg.clone()
            }
        } else {
            cfg.clone()
        };
        let inst = build_instance(kind, &sized)?;
        let solver_cfg = sized.solver_config();
        let result = solver::run(&inst.objective, &inst.manifold, &solver_cfg, None)
            .map_err(|e| CliError::Run(format!("{}: {e}", inst.name)))?;
        let report = RunReport {
            problem_name: inst.name.clone(),
            manifold_string: inst.manifold.to_string(),
            ofv: result
                .history
                .last()
                .map(|r| r.f_val)
                .unwrap_or(result.final_f),
            g_norm_final: result.final_g_norm(),
            iters: result.iters(),
            f_evals: inst.objective.f_evals(),
            wall_ms: result.wall_time.as_millis(),
            status: result.status.as_str().to_string(),
        };
        eprintln!(
            "{} on {}: {} OFV = {:.6} after {} iterations, {} evaluations, {} ms",
            report.problem_name,
            report.manifold_string,
            report.status,
            report.ofv,
            report.iters,
            report.f_evals,
            report.wall_ms
        );
        write_file(
            &cfg.out.join(format!("{}.csv", file_stem(kind))),
            &csv_for(&result),
        )?;
        reports.push(report);
    }
    let summary = Summary {
        schema: 1,
        reports: &reports,
    };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::Io(format!("cannot encode summary: {e}")))?;
    write_file(&cfg.out.join("summary.json"), &(json + "\n"))?;
    Ok(reports)
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|e| CliError::Io(format!("cannot write {path:?}: {e}")))
}

/// CLI entry point; returns the process exit code.
pub fn main_impl<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let env_seed = std::env::var("RARC_SEED")
        .ok()
        .and_then(|s| s.parse::<u64>().ok());
    let cfg = match parse_config(argv, env_seed) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return e.exit_code();
        }
    };
    if cfg.dry_run {
        match serde_json::to_string_pretty(&cfg) {
            Ok(json) => {
                println!("{json}");
                return EXIT_OK;
            }
            Err(e) => {
                eprintln!("cannot encode config: {e}");
                return EXIT_IO;
            }
        }
    }
    match run_benchmark(&cfg) {
        Ok(reports) => {
            if reports
                .iter()
                .all(|r| r.status == "FirstOrderConverged" || r.status == "SecondOrderConverged")
            {
                EXIT_OK
            } else {
                EXIT_NONCONVERGED
            }
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
