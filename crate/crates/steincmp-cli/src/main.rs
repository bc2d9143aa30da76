//! `steincmp` — relative goodness-of-fit testing for latent variable
//! models from the command line.
//!
//! Subcommands:
//! - `test`: one relative test on user data and two model configs,
//!   printing a JSON report to stdout.
//! - `experiment`: run a simulation study config and write
//!   `rejection_table.csv` / `rejection_table.json`.
//! - `gram`: dump a model's Stein gram on a dataset as dense CSV.
//! - `oracle`: evaluate the closed-form Gaussian references.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use steincmp::harness::{self, ExperimentConfig};
use steincmp::models::{Model, ModelSpec};
use steincmp::oracles::{gaussian_ksd_sq, gaussian_mmd_sq_diff, GaussianSpec};
use steincmp::{
    median_heuristic, relative_test, stein_gram, Bandwidth, Dataset, Domain, KernelSpec,
    TestConfig, VarianceMethod,
};

#[derive(Parser)]
#[command(name = "steincmp", version, about = "Relative Stein-discrepancy model comparison")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one relative test: is model P at least as good a fit as Q?
    Test(TestArgs),
    /// Run a simulation study from a JSON config.
    Experiment(ExperimentArgs),
    /// Dump the Stein gram of one model on a dataset.
    Gram(GramArgs),
    /// Evaluate closed-form Gaussian reference quantities.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct TestArgs {
    /// Headerless CSV of observations, one row each.
    #[arg(long)]
    data: PathBuf,
    /// JSON model spec for candidate P.
    #[arg(long)]
    model_p: PathBuf,
    /// JSON model spec for candidate Q.
    #[arg(long)]
    model_q: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_parser = parse_variance, default_value = "vstat")]
    variance_method: VarianceMethod,
    /// Latent draws per observation (family desk default when omitted).
    #[arg(long)]
    m: Option<usize>,
    /// Burn-in steps (family desk default when omitted).
    #[arg(long)]
    t: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for rejection_table.{csv,json}.
    #[arg(long)]
    out: PathBuf,
    /// Use published-study sampler settings and 300 trials.
    #[arg(long)]
    paper_scale: bool,
    /// Force identical models (delta_q = delta_p).
    #[arg(long)]
    identical: bool,
}

#[derive(Args)]
struct GramArgs {
    #[arg(long)]
    data: PathBuf,
    /// JSON model spec.
    #[arg(long)]
    model: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the exact marginal score instead of MCMC (PPCA only).
    #[arg(long)]
    exact: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[command(subcommand)]
    which: OracleCommand,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// MMD²(p,r) − MMD²(q,r) for zero-mean Gaussians.
    MmdDiff {
        #[arg(long)]
        p: PathBuf,
        #[arg(long)]
        q: PathBuf,
        #[arg(long)]
        r: PathBuf,
        /// Bandwidth of the kernel exp(−‖x−x'‖²/(2λ²)).
        #[arg(long)]
        lambda: f64,
    },
    /// Monte Carlo KSD²(p, r) for zero-mean Gaussians (prints value
    /// and standard error).
    KsdGauss {
        #[arg(long)]
        p: PathBuf,
        #[arg(long)]
        r: PathBuf,
        #[arg(long)]
        lambda: f64,
        /// Kernel convention: gaussian-sq (exp(−r²/λ²)) or
        /// gaussian-half (exp(−r²/2λ²)).
        #[arg(long, default_value = "gaussian-sq")]
        kernel: String,
        #[arg(long, default_value_t = 100_000)]
        mc_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_variance(s: &str) -> Result<VarianceMethod, String> {
    match s.to_ascii_lowercase().as_str() {
        "ustat" | "u" => Ok(VarianceMethod::UStat),
        "vstat" | "v" => Ok(VarianceMethod::VStat),
        other => Err(format!("unknown variance method `{other}` (ustat|vstat)")),
    }
}

/// Errors before any computation starts are configuration errors.
enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn load_model(path: &Path) -> Result<(ModelSpec, Model), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let spec: ModelSpec = serde_json::from_str(&text)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let model = spec.build().map_err(config_err)?;
    Ok((spec, model))
}

fn load_dataset(path: &Path, domain: Domain) -> Result<Dataset, CliError> {
    Dataset::read_csv(path, domain).map_err(config_err)
}

fn desk_defaults(model: &Model) -> (usize, usize) {
    match model {
        Model::Ppca(_) => (200, 100),
        Model::Lda(_) => (200, 1000),
        Model::Gdpm(_) => (200, 500),
    }
}

fn cmd_test(args: &TestArgs) -> Result<(), CliError> {
    let (_, model_p) = load_model(&args.model_p)?;
    let (_, model_q) = load_model(&args.model_q)?;
    if model_p.domain() != model_q.domain() {
        return Err(CliError::Config(
            "models P and Q live on different observation domains".into(),
        ));
    }
    if !(args.alpha > 0.0 && args.alpha <= 0.5) {
        return Err(CliError::Config(format!(
            "alpha must lie in (0, 0.5], got {}",
            args.alpha
        )));
    }
    let data = load_dataset(&args.data, model_p.domain())?;
    let (dm, dt) = desk_defaults(&model_p);
    let (m, t) = (args.m.unwrap_or(dm), args.t.unwrap_or(dt));

    let pool = harness::thread_pool().map_err(runtime_err)?;
    let report = pool
        .install(|| -> steincmp::Result<steincmp::TestReport> {
            let kernel = match model_p.domain() {
                Domain::Continuous => KernelSpec::GaussianSq {
                    bandwidth: median_heuristic(&data)?,
                },
                Domain::Discrete { vocab_size } => KernelSpec::BowGaussian { vocab_size },
            };
            let sp = model_p.averaged_score_matrix(&data, m, t, args.seed)?;
            let sq = model_q.averaged_score_matrix(&data, m, t, args.seed.wrapping_add(1))?;
            let gp = stein_gram(&sp, &data, &kernel)?;
            let gq = stein_gram(&sq, &data, &kernel)?;
            let cfg = TestConfig::new(args.alpha)?
                .with_variance_method(args.variance_method)
                .with_sampler_settings(m, t);
            relative_test(&gp, &gq, &cfg)
        })
        .map_err(runtime_err)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(runtime_err)?
    );
    Ok(())
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| config_err(format!("{}: {e}", args.config.display())))?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| config_err(format!("{}: {e}", args.config.display())))?;
    if args.paper_scale {
        cfg.apply_paper_scale();
    }
    cfg.validate().map_err(config_err)?;
    std::fs::create_dir_all(&args.out).map_err(config_err)?;

    let table = if args.identical {
        harness::run_identical_models(&cfg)
    } else {
        harness::run_experiment(&cfg)
    }
    .map_err(runtime_err)?;

    let csv_path = args.out.join("rejection_table.csv");
    let mut csv = Vec::new();
    table.write_csv(&mut csv).map_err(runtime_err)?;
    std::fs::write(&csv_path, csv).map_err(runtime_err)?;

    let json_path = args.out.join("rejection_table.json");
    let payload = serde_json::json!({
        "schema_version": steincmp::SCHEMA_VERSION,
        "config": cfg,
        "table": table,
    });
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&payload).map_err(runtime_err)?,
    )
    .map_err(runtime_err)?;
    eprintln!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn cmd_gram(args: &GramArgs) -> Result<(), CliError> {
    let (_, model) = load_model(&args.model)?;
    let data = load_dataset(&args.data, model.domain())?;
    let (dm, dt) = desk_defaults(&model);
    let (m, t) = (args.m.unwrap_or(dm), args.t.unwrap_or(dt));
    let pool = harness::thread_pool().map_err(runtime_err)?;
    let gram = pool
        .install(|| -> steincmp::Result<steincmp::SteinGram> {
            let kernel = match model.domain() {
                Domain::Continuous => KernelSpec::GaussianSq {
                    bandwidth: median_heuristic(&data)?,
                },
                Domain::Discrete { vocab_size } => KernelSpec::BowGaussian { vocab_size },
            };
            let scores = if args.exact {
                model.exact_score_matrix(&data)?
            } else {
                model.averaged_score_matrix(&data, m, t, args.seed)?
            };
            stein_gram(&scores, &data, &kernel)
        })
        .map_err(runtime_err)?;
    let mut buf = Vec::new();
    harness::write_gram_csv(&gram, &mut buf).map_err(runtime_err)?;
    std::fs::write(&args.out, buf).map_err(runtime_err)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Deserialize)]
struct GaussianFile {
    #[serde(default)]
    mean: Option<Vec<f64>>,
    cov: Vec<Vec<f64>>,
}

fn load_gaussian(path: &Path) -> Result<GaussianSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let file: GaussianFile = serde_json::from_str(&text)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let mean = file.mean.unwrap_or_else(|| vec![0.0; file.cov.len()]);
    GaussianSpec::new(mean, file.cov).map_err(config_err)
}

fn cmd_oracle(args: &OracleArgs) -> Result<(), CliError> {
    match &args.which {
        OracleCommand::MmdDiff { p, q, r, lambda } => {
            let (p, q, r) = (load_gaussian(p)?, load_gaussian(q)?, load_gaussian(r)?);
            let bw = Bandwidth::new(*lambda).map_err(config_err)?;
            let v = gaussian_mmd_sq_diff(&p, &q, &r, bw).map_err(runtime_err)?;
            println!("{v}");
        }
        OracleCommand::KsdGauss {
            p,
            r,
            lambda,
            kernel,
            mc_n,
            seed,
        } => {
            let (p, r) = (load_gaussian(p)?, load_gaussian(r)?);
            let bw = Bandwidth::new(*lambda).map_err(config_err)?;
            let spec = match kernel.as_str() {
                "gaussian-sq" => KernelSpec::GaussianSq { bandwidth: bw },
                "gaussian-half" => KernelSpec::GaussianHalf { bandwidth: bw },
                other => {
                    return Err(CliError::Config(format!(
                        "unknown kernel `{other}` (gaussian-sq|gaussian-half)"
                    )))
                }
            };
            let (v, se) = gaussian_ksd_sq(&p, &r, &spec, *mc_n, *seed).map_err(runtime_err)?;
            println!("{v} {se}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Test(args) => cmd_test(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Gram(args) => cmd_gram(args),
        Command::Oracle(args) => cmd_oracle(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}
