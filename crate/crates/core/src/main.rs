use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use katalyst::harness::{
    parse_solver_list, BudgetSpec, DatasetSource, ExperimentConfig, HarnessError,
};
use katalyst::problem::{LossKind, RegKind};

#[derive(Parser)]
#[command(name = "katalyst", version, about = "Benchmark harness for stagewise accelerated solvers on sparse nonconvex regularized ERM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or inline flags and write a
    /// trace CSV.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file; inline flags are ignored except
    /// --deterministic-time.
    #[arg(long)]
    config: Option<PathBuf>,

    /// LIBSVM file path or `synthetic:<n>,<d>,<seed>`.
    #[arg(long)]
    dataset: Option<String>,

    /// `squared_hinge` or `least_squares`.
    #[arg(long, default_value = "squared_hinge")]
    loss: String,

    /// `lsp`, `tl1`, `l1`, or `none`.
    #[arg(long, default_value = "lsp")]
    reg: String,

    /// Penalty shape parameter.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,

    /// Penalty weight.
    #[arg(long)]
    lambda: Option<f64>,

    /// Comma-separated: katalyst, prox_svrg, prox_svrg_mb.
    #[arg(long, default_value = "katalyst,prox_svrg,prox_svrg_mb")]
    solvers: String,

    /// Gradient budget, absolute (`8000`) or per-n (`40n`).
    #[arg(long, default_value = "40n")]
    budget: String,

    /// S: katalyst runs S+1 stages (budget permitting).
    #[arg(long, default_value_t = 4)]
    stages: u32,

    /// Stage-selection weight exponent.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,

    #[arg(long, default_value_t = 7)]
    seed: u64,

    /// Output CSV path.
    #[arg(long, default_value = "trace.csv")]
    out: PathBuf,

    /// Feature-dimension override for LIBSVM files.
    #[arg(long)]
    dim: Option<usize>,

    /// Lower bound on the weak-convexity modulus (lets convex instances
    /// run katalyst).
    #[arg(long)]
    mu_floor: Option<f64>,

    /// Zero the wall_ns column so identical configs give byte-identical
    /// CSVs.
    #[arg(long)]
    deterministic_time: bool,
}

fn parse_loss(s: &str) -> Result<LossKind, HarnessError> {
    match s {
        "squared_hinge" => Ok(LossKind::SquaredHinge),
        "least_squares" => Ok(LossKind::LeastSquares),
        other => Err(HarnessError::Config(format!("unknown loss `{other}`"))),
    }
}

fn parse_reg(s: &str) -> Result<RegKind, HarnessError> {
    match s {
        "none" => Ok(RegKind::None),
        "l1" => Ok(RegKind::L1),
        "lsp" => Ok(RegKind::Lsp),
        "tl1" => Ok(RegKind::Tl1),
        other => Err(HarnessError::Config(format!("unknown regularizer `{other}`"))),
    }
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig, HarnessError> {
    if let Some(path) = &args.config {
        let mut cfg = ExperimentConfig::from_file(path)?;
        cfg.deterministic_time |= args.deterministic_time;
        return Ok(cfg);
    }
    let dataset: DatasetSource = args
        .dataset
        .as_deref()
        .ok_or_else(|| HarnessError::Config("--dataset (or --config) is required".into()))?
        .parse()?;
    let lambda = args
        .lambda
        .ok_or_else(|| HarnessError::Config("--lambda is required".into()))?;
    let mut cfg = ExperimentConfig::new(dataset, lambda);
    cfg.loss = parse_loss(&args.loss)?;
    cfg.reg_kind = parse_reg(&args.reg)?;
    cfg.beta = args.beta;
    cfg.solvers = parse_solver_list(&args.solvers)?;
    cfg.budget = args.budget.parse::<BudgetSpec>()?;
    cfg.stages = args.stages;
    cfg.alpha = args.alpha;
    cfg.seed = args.seed;
    cfg.output = args.out.clone();
    cfg.dim_override = args.dim;
    cfg.mu_floor = args.mu_floor;
    cfg.deterministic_time = args.deterministic_time;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => build_config(args).and_then(|cfg| katalyst::harness::run_experiment(&cfg)),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
