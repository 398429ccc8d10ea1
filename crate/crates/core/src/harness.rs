//! Experiment harness: parse a configuration, load or synthesize a
//! dataset, run the selected solvers from the same start point under the
//! same gradient budget, and emit one CSV with every trace.
//!
//! Each solver draws from its own RNG stream derived from the experiment
//! seed, so adding or removing solvers never perturbs the others'
//! trajectories.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::baselines::{run_prox_svrg, BaselineError, ProxSvrgConfig};
use crate::data::{parse_libsvm, DataError, Dataset, SparseRow};
use crate::katalyst::{run_katalyst, KatalystConfig, KatalystError};
use crate::metrics::{prox_gradient_norm, Measure, MetricsError, Recorder, SolverTrace, TracePoint};
use crate::problem::{CompositeProblem, DenseVector, LossKind, ProblemError, RegKind, Regularizer};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Katalyst(#[from] KatalystError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where the data comes from: a LIBSVM file or a reproducible synthetic
/// spec `synthetic:<n>,<d>,<seed>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSource {
    Path(PathBuf),
    Synthetic { n: usize, d: usize, seed: u64 },
}

impl std::str::FromStr for DatasetSource {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        if let Some(spec) = s.strip_prefix("synthetic:") {
            let parts: Vec<&str> = spec.split(',').collect();
            if parts.len() != 3 {
                return Err(HarnessError::Config(format!(
                    "synthetic spec must be `synthetic:<n>,<d>,<seed>`, got `{s}`"
                )));
            }
            let parse = |p: &str, what: &str| {
                p.trim().parse::<u64>().map_err(|_| {
                    HarnessError::Config(format!("bad {what} in synthetic spec `{s}`"))
                })
            };
            Ok(DatasetSource::Synthetic {
                n: parse(parts[0], "n")? as usize,
                d: parse(parts[1], "d")? as usize,
                seed: parse(parts[2], "seed")?,
            })
        } else {
            Ok(DatasetSource::Path(PathBuf::from(s)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Katalyst,
    ProxSvrg,
    ProxSvrgMb,
}

impl SolverKind {
    /// Stable RNG stream id: a solver's randomness never depends on which
    /// other solvers run.
    fn stream_id(self) -> u64 {
        match self {
            SolverKind::Katalyst => 1,
            SolverKind::ProxSvrg => 2,
            SolverKind::ProxSvrgMb => 3,
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolverKind::Katalyst => "katalyst",
            SolverKind::ProxSvrg => "prox_svrg",
            SolverKind::ProxSvrgMb => "prox_svrg_mb",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SolverKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s.trim() {
            "katalyst" => Ok(SolverKind::Katalyst),
            "prox_svrg" => Ok(SolverKind::ProxSvrg),
            "prox_svrg_mb" => Ok(SolverKind::ProxSvrgMb),
            other => Err(HarnessError::Config(format!("unknown solver `{other}`"))),
        }
    }
}

pub fn parse_solver_list(s: &str) -> Result<Vec<SolverKind>, HarnessError> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let kind: SolverKind = part.parse()?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    if out.is_empty() {
        return Err(HarnessError::Config("at least one solver required".into()));
    }
    Ok(out)
}

/// A gradient budget: absolute, or a multiple of n written like `40n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetSpec {
    Grads(u64),
    PerN(f64),
}

impl BudgetSpec {
    pub fn resolve(self, n: usize) -> u64 {
        match self {
            BudgetSpec::Grads(g) => g,
            BudgetSpec::PerN(m) => (m * n as f64).round() as u64,
        }
    }
}

impl std::str::FromStr for BudgetSpec {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        let s = s.trim();
        if let Some(mult) = s.strip_suffix('n') {
            let m: f64 = mult
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad budget `{s}`")))?;
            if !(m > 0.0) {
                return Err(HarnessError::Config(format!("budget must be positive: `{s}`")));
            }
            Ok(BudgetSpec::PerN(m))
        } else {
            let g: u64 = s
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad budget `{s}`")))?;
            if g == 0 {
                return Err(HarnessError::Config("budget must be positive".into()));
            }
            Ok(BudgetSpec::Grads(g))
        }
    }
}

fn parse_loss(s: &str) -> Result<LossKind, HarnessError> {
    match s.trim() {
        "squared_hinge" => Ok(LossKind::SquaredHinge),
        "least_squares" => Ok(LossKind::LeastSquares),
        other => Err(HarnessError::Config(format!("unknown loss `{other}`"))),
    }
}

fn parse_reg(s: &str) -> Result<RegKind, HarnessError> {
    match s.trim() {
        "none" => Ok(RegKind::None),
        "l1" => Ok(RegKind::L1),
        "lsp" => Ok(RegKind::Lsp),
        "tl1" => Ok(RegKind::Tl1),
        other => Err(HarnessError::Config(format!("unknown regularizer `{other}`"))),
    }
}

fn reg_name(r: RegKind) -> &'static str {
    match r {
        RegKind::None => "none",
        RegKind::L1 => "l1",
        RegKind::Lsp => "lsp",
        RegKind::Tl1 => "tl1",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub loss: LossKind,
    pub reg_kind: RegKind,
    pub beta: f64,
    pub lambda: f64,
    pub solvers: Vec<SolverKind>,
    pub budget: BudgetSpec,
    /// S: the stagewise solver runs S+1 stages.
    pub stages: u32,
    pub alpha: f64,
    pub seed: u64,
    pub output: PathBuf,
    pub deterministic_time: bool,
    pub dim_override: Option<usize>,
    pub mu_floor: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSource, lambda: f64) -> Self {
        Self {
            dataset,
            loss: LossKind::SquaredHinge,
            reg_kind: RegKind::Lsp,
            beta: 1.0,
            lambda,
            solvers: vec![SolverKind::Katalyst, SolverKind::ProxSvrg, SolverKind::ProxSvrgMb],
            budget: BudgetSpec::PerN(40.0),
            stages: 4,
            alpha: 1.0,
            seed: 7,
            output: PathBuf::from("trace.csv"),
            deterministic_time: false,
            dim_override: None,
            mu_floor: None,
        }
    }

    /// Load from flat `key = value` text. `#` starts a comment; keys
    /// mirror the struct fields. `dataset` and `lambda` are required.
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_kv_text(&text)
    }

    pub fn from_kv_text(text: &str) -> Result<Self, HarnessError> {
        let mut dataset: Option<DatasetSource> = None;
        let mut lambda: Option<f64> = None;
        let mut cfg = ExperimentConfig::new(DatasetSource::Path(PathBuf::new()), 0.0);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| HarnessError::Config(format!("line {}: bad {what} `{value}`", lineno + 1));
            match key {
                "dataset" => dataset = Some(value.parse()?),
                "loss" => cfg.loss = parse_loss(value)?,
                "reg" => cfg.reg_kind = parse_reg(value)?,
                "beta" => cfg.beta = value.parse().map_err(|_| bad("beta"))?,
                "lambda" => lambda = Some(value.parse().map_err(|_| bad("lambda"))?),
                "solvers" => cfg.solvers = parse_solver_list(value)?,
                "budget" => cfg.budget = value.parse()?,
                "stages" => cfg.stages = value.parse().map_err(|_| bad("stages"))?,
                "alpha" => cfg.alpha = value.parse().map_err(|_| bad("alpha"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                "out" => cfg.output = PathBuf::from(value),
                "dim_override" => cfg.dim_override = Some(value.parse().map_err(|_| bad("dim_override"))?),
                "mu_floor" => cfg.mu_floor = Some(value.parse().map_err(|_| bad("mu_floor"))?),
                "deterministic_time" => {
                    cfg.deterministic_time = value.parse().map_err(|_| bad("deterministic_time"))?
                }
                other => {
                    return Err(HarnessError::Config(format!(
                        "line {}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.dataset = dataset.ok_or_else(|| HarnessError::Config("missing `dataset`".into()))?;
        cfg.lambda = lambda.ok_or_else(|| HarnessError::Config("missing `lambda`".into()))?;
        Ok(cfg)
    }
}

/// A synthetic classification dataset plus the weight vector that
/// generated its labels.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub data: Dataset,
    pub planted: DenseVector,
}

/// Reproducible sparse classification data: a planted weight vector,
/// Gaussian features at density 0.1, rows rescaled to norm at most 1, and
/// labels `sign(a^T w* + noise)`.
pub fn make_synthetic(n: usize, d: usize, seed: u64) -> Synthetic {
    assert!(n >= 1 && d >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planted = DenseVector::zeros(d);
    for j in 0..d {
        planted[j] = rng.sample(StandardNormal);
    }
    let scale = 3.0 / planted.norm();
    planted.scale(scale);

    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut indices = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for j in 0..d {
            if rng.random::<f64>() < 0.1 {
                let v: f64 = rng.sample(StandardNormal);
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
        }
        let norm_sq: f64 = values.iter().map(|v| v * v).sum();
        if norm_sq > 1.0 {
            let inv = norm_sq.sqrt().recip();
            for v in &mut values {
                *v *= inv;
            }
        }
        let row = SparseRow::new(indices, values).expect("generated rows are valid");
        let noise: f64 = rng.sample(StandardNormal);
        let score = row.dot(&planted) + 0.1 * noise;
        labels.push(if score >= 0.0 { 1.0 } else { -1.0 });
        rows.push(row);
    }
    let data = Dataset::new(rows, labels, d).expect("generated dataset is valid");
    Synthetic { data, planted }
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, HarnessError> {
    match &cfg.dataset {
        DatasetSource::Path(path) => {
            let file = File::open(path)?;
            Ok(parse_libsvm(BufReader::new(file), cfg.dim_override)?)
        }
        DatasetSource::Synthetic { n, d, seed } => {
            if *n == 0 || *d == 0 {
                return Err(HarnessError::Config("synthetic n and d must be >= 1".into()));
            }
            Ok(make_synthetic(*n, *d, *seed).data)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverSummary {
    pub solver: SolverKind,
    pub grads: u64,
    pub diag_grads: u64,
    pub final_objective: f64,
    pub final_stationarity: f64,
    pub measure: Measure,
    pub truncated: bool,
    /// Cost of the step the budget check gates on (one epoch).
    pub epoch_cost: u64,
}

#[derive(Debug)]
pub struct ExperimentSummary {
    pub n: usize,
    pub dim: usize,
    pub budget: u64,
    pub smoothness: f64,
    pub mu: f64,
    pub ell1_scale: f64,
    pub solvers: Vec<SolverSummary>,
    pub output: PathBuf,
}

impl fmt::Display for ExperimentSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "n={} d={}  L={} mu={} ell1={}  budget={} grads",
            self.n, self.dim, self.smoothness, self.mu, self.ell1_scale, self.budget
        )?;
        writeln!(
            f,
            "{:<14} {:>10} {:>9} {:>14} {:>14} {:>9} {:>9}",
            "solver", "grads", "grads/n", "objective", "stationarity", "measure", "truncated"
        )?;
        for s in &self.solvers {
            writeln!(
                f,
                "{:<14} {:>10} {:>9.2} {:>14.8} {:>14.6e} {:>9} {:>9}",
                s.solver.to_string(),
                s.grads,
                s.grads as f64 / self.n as f64,
                s.final_objective,
                s.final_stationarity,
                s.measure.to_string(),
                if s.truncated { "yes" } else { "no" }
            )?;
        }
        write!(f, "trace written to {}", self.output.display())
    }
}

/// Run every selected solver from `x0 = 0` under the shared budget and
/// write the combined trace CSV.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary, HarnessError> {
    let data = load_dataset(cfg)?;
    let reg = Regularizer::new(cfg.reg_kind, cfg.beta, cfg.lambda)?;
    let mut problem = CompositeProblem::new(data, cfg.loss, reg)?;
    if let Some(floor) = cfg.mu_floor {
        problem = problem.with_mu_floor(floor);
    }
    let n = problem.n();
    let budget = cfg.budget.resolve(n);
    if budget == 0 {
        return Err(HarnessError::Config("resolved budget is zero".into()));
    }
    if cfg.solvers.is_empty() {
        return Err(HarnessError::Config("at least one solver required".into()));
    }
    let x0 = DenseVector::zeros(problem.dim());
    let obj0 = problem.objective(&x0);

    let mut trace = SolverTrace::new();
    let mut summaries = Vec::new();

    for &solver in &cfg.solvers {
        let mut recorder = Recorder::new(solver.to_string()).with_budget(budget);
        if !cfg.deterministic_time {
            recorder = recorder.with_wall_clock();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(solver.stream_id());

        let summary = match solver {
            SolverKind::Katalyst => {
                recorder.record(0, 0, obj0, f64::NAN, Measure::Init);
                let kcfg = KatalystConfig::from_problem(&problem, cfg.stages, cfg.alpha)
                    .map_err(|e| match e {
                        KatalystError::MuNotPositive(_) => HarnessError::Config(format!(
                            "katalyst selected but mu = 0 for reg `{}`; set mu_floor",
                            reg_name(cfg.reg_kind)
                        )),
                        other => HarnessError::Katalyst(other),
                    })?;
                let run = run_katalyst(&problem, &x0, &kcfg, &mut rng, &mut recorder)?;
                if run.truncated {
                    recorder.mark_truncated();
                }
                log::info!(
                    "katalyst: {} stages, {} grads, tau={}",
                    run.records.len(),
                    recorder.grads(),
                    run.tau
                );
                SolverSummary {
                    solver,
                    grads: recorder.grads(),
                    diag_grads: recorder.diag_grads(),
                    final_objective: problem.objective(&run.final_iterate),
                    final_stationarity: run
                        .records
                        .last()
                        .map(|r| r.moreau_proxy)
                        .unwrap_or(f64::NAN),
                    measure: Measure::MoreauProxy,
                    truncated: run.truncated,
                    epoch_cost: run.epoch_cost,
                }
            }
            SolverKind::ProxSvrg | SolverKind::ProxSvrgMb => {
                let pg0 = prox_gradient_norm(&problem, &x0, 1.0 / problem.smoothness());
                recorder.charge_diag(n as u64);
                recorder.record(0, 0, obj0, pg0, Measure::ProxGrad);
                let l = problem.smoothness();
                let mut pcfg = if solver == SolverKind::ProxSvrg {
                    ProxSvrgConfig::small_step(n, l, 0)
                } else {
                    ProxSvrgConfig::mini_batch(n, l, 0)
                };
                // enough scheduled epochs that only the budget binds
                pcfg.epochs = (budget / pcfg.epoch_cost(n)) as u32 + 1;
                let epoch_cost = pcfg.epoch_cost(n);
                let out = run_prox_svrg(&problem, &x0, &pcfg, &mut rng, &mut recorder)?;
                if out.truncated {
                    recorder.mark_truncated();
                }
                log::info!(
                    "{solver}: {} epochs, {} grads",
                    out.epochs_run,
                    recorder.grads()
                );
                let final_stationarity = recorder
                    .points()
                    .iter()
                    .rev()
                    .find(|p| p.measure == Measure::ProxGrad)
                    .map(|p| p.stationarity)
                    .unwrap_or(pg0);
                SolverSummary {
                    solver,
                    grads: recorder.grads(),
                    diag_grads: recorder.diag_grads(),
                    final_objective: problem.objective(&out.x),
                    final_stationarity,
                    measure: Measure::ProxGrad,
                    truncated: out.truncated,
                    epoch_cost,
                }
            }
        };
        summaries.push(summary);
        for point in recorder.into_points() {
            trace.record(point)?;
        }
    }

    let file = File::create(&cfg.output)?;
    let mut writer = BufWriter::new(file);
    write_trace_csv(&trace, n, &mut writer)?;
    writer.flush()?;

    Ok(ExperimentSummary {
        n,
        dim: problem.dim(),
        budget,
        smoothness: problem.smoothness(),
        mu: problem.mu(),
        ell1_scale: problem.ell1_scale(),
        solvers: summaries,
        output: cfg.output.clone(),
    })
}

pub const CSV_HEADER: &str =
    "solver,stage,epoch,grads,grads_over_n,objective,stationarity,measure_id,wall_ns";

/// Emit the pinned CSV schema. Float columns use the shortest
/// round-trippable decimal form, so reading the file back loses nothing.
pub fn write_trace_csv(
    trace: &SolverTrace,
    n: usize,
    out: &mut impl Write,
) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for p in trace.points() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            p.solver,
            p.stage,
            p.epoch,
            p.grads,
            p.grads as f64 / n as f64,
            p.objective,
            p.stationarity,
            p.measure,
            p.wall_ns
        )?;
    }
    Ok(())
}

pub fn read_trace_csv(reader: impl BufRead) -> Result<SolverTrace, HarnessError> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::Config("empty CSV".into()))??;
    if header != CSV_HEADER {
        return Err(HarnessError::Config(format!("unexpected CSV header `{header}`")));
    }
    let mut trace = SolverTrace::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(HarnessError::Config(format!(
                "CSV row {}: expected 9 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let bad = |what: &str| {
            HarnessError::Config(format!("CSV row {}: bad {what}", lineno + 2))
        };
        trace.record(TracePoint {
            solver: fields[0].to_string(),
            stage: fields[1].parse().map_err(|_| bad("stage"))?,
            epoch: fields[2].parse().map_err(|_| bad("epoch"))?,
            grads: fields[3].parse().map_err(|_| bad("grads"))?,
            // fields[4] (grads_over_n) is derived; recomputed on write
            objective: fields[5].parse().map_err(|_| bad("objective"))?,
            stationarity: fields[6].parse().map_err(|_| bad("stationarity"))?,
            measure: fields[7].parse()?,
            wall_ns: fields[8].parse().map_err(|_| bad("wall_ns"))?,
        })?;
    }
    Ok(trace)
}
