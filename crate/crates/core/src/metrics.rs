//! Stationarity measures, gradient-evaluation accounting, and trace
//! recording shared by all solvers.
//!
//! Two counters exist on purpose: the algorithmic counter feeds the
//! benchmark budget axis, while diagnostic full-gradient evaluations done
//! only for plotting (stationarity at trace points) go to a separate
//! counter and never consume budget.

use std::collections::HashMap;
use std::time::Instant;

use thiserror::Error;

use crate::problem::{soft_threshold, CompositeProblem, DenseVector};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("out-of-order gradient count for solver `{solver}`: {got} after {prev}")]
    OutOfOrder { solver: String, prev: u64, got: u64 },
    #[error("non-finite objective in trace point for solver `{solver}`")]
    NonFiniteObjective { solver: String },
    #[error("unknown measure id `{0}`")]
    BadMeasure(String),
}

/// Which stationarity quantity a trace point carries. The stagewise solver
/// reports a Moreau-envelope proxy while the baselines report a proximal
/// gradient norm; keeping the id on every point stops the curves from
/// being conflated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    /// `||x_{s-1} - x_s|| / gamma`, the Moreau envelope gradient proxy.
    MoreauProxy,
    /// `||G_eta(x)||` with `eta = 1/L`.
    ProxGrad,
    /// Initial point; no stationarity value yet.
    Init,
    /// Budget-truncation marker rows.
    Truncated,
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Measure::MoreauProxy => "moreau",
            Measure::ProxGrad => "pg",
            Measure::Init => "init",
            Measure::Truncated => "truncated",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Measure {
    type Err = MetricsError;
    fn from_str(s: &str) -> Result<Self, MetricsError> {
        match s {
            "moreau" => Ok(Measure::MoreauProxy),
            "pg" => Ok(Measure::ProxGrad),
            "init" => Ok(Measure::Init),
            "truncated" => Ok(Measure::Truncated),
            other => Err(MetricsError::BadMeasure(other.into())),
        }
    }
}

/// One row of a solver trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub solver: String,
    pub stage: u32,
    pub epoch: u32,
    pub grads: u64,
    pub objective: f64,
    pub stationarity: f64,
    pub measure: Measure,
    pub wall_ns: u64,
}

/// Time series of trace points from one or more solvers. Gradient counts
/// must be non-decreasing within a solver id; streams from different
/// solvers are independent.
#[derive(Debug, Default)]
pub struct SolverTrace {
    points: Vec<TracePoint>,
    last_grads: HashMap<String, u64>,
}

impl SolverTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, point: TracePoint) -> Result<(), MetricsError> {
        if !point.objective.is_finite() {
            return Err(MetricsError::NonFiniteObjective {
                solver: point.solver.clone(),
            });
        }
        if let Some(&prev) = self.last_grads.get(&point.solver) {
            if point.grads < prev {
                return Err(MetricsError::OutOfOrder {
                    solver: point.solver.clone(),
                    prev,
                    got: point.grads,
                });
            }
        }
        self.last_grads.insert(point.solver.clone(), point.grads);
        self.points.push(point);
        Ok(())
    }

    pub fn points(&self) -> &[TracePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Count of stochastic gradient evaluations. A full gradient adds n, a
/// stochastic component evaluation adds 1.
#[derive(Debug, Default, Clone, Copy)]
pub struct GradCounter {
    count: u64,
}

impl GradCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, evals: u64) {
        self.count += evals;
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

/// Per-run recording handle handed to a solver: owns the solver id, the
/// algorithmic and diagnostic counters, the optional gradient budget, and
/// the trace points produced so far.
#[derive(Debug)]
pub struct Recorder {
    solver: String,
    points: Vec<TracePoint>,
    counter: GradCounter,
    diag: GradCounter,
    budget: Option<u64>,
    timer: Option<Instant>,
    truncated: bool,
}

impl Recorder {
    /// Unbounded recorder with deterministic (zero) wall time.
    pub fn new(solver: impl Into<String>) -> Self {
        Self {
            solver: solver.into(),
            points: Vec::new(),
            counter: GradCounter::new(),
            diag: GradCounter::new(),
            budget: None,
            timer: None,
            truncated: false,
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = Some(budget);
        self
    }

    /// Stamp real wall-clock nanoseconds on points instead of zeros.
    pub fn with_wall_clock(mut self) -> Self {
        self.timer = Some(Instant::now());
        self
    }

    pub fn solver(&self) -> &str {
        &self.solver
    }

    pub fn grads(&self) -> u64 {
        self.counter.count()
    }

    pub fn diag_grads(&self) -> u64 {
        self.diag.count()
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// Charge algorithmic gradient evaluations against the budget.
    pub fn charge(&mut self, evals: u64) {
        self.counter.add(evals);
    }

    /// Charge diagnostic-only evaluations (excluded from the budget axis).
    pub fn charge_diag(&mut self, evals: u64) {
        self.diag.add(evals);
    }

    /// Whether `evals` more algorithmic evaluations still fit the budget.
    pub fn can_afford(&self, evals: u64) -> bool {
        match self.budget {
            Some(b) => self.counter.count() + evals <= b,
            None => true,
        }
    }

    fn wall_ns(&self) -> u64 {
        self.timer
            .map(|t| t.elapsed().as_nanos() as u64)
            .unwrap_or(0)
    }

    pub fn record(
        &mut self,
        stage: u32,
        epoch: u32,
        objective: f64,
        stationarity: f64,
        measure: Measure,
    ) {
        let wall_ns = self.wall_ns();
        self.points.push(TracePoint {
            solver: self.solver.clone(),
            stage,
            epoch,
            grads: self.counter.count(),
            objective,
            stationarity,
            measure,
            wall_ns,
        });
    }

    /// Append a truncation marker duplicating the last point's values.
    /// No-op on an empty recorder.
    pub fn mark_truncated(&mut self) {
        self.truncated = true;
        if let Some(last) = self.points.last().cloned() {
            let wall_ns = self.wall_ns();
            self.points.push(TracePoint {
                measure: Measure::Truncated,
                wall_ns,
                ..last
            });
        }
    }

    pub fn points(&self) -> &[TracePoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<TracePoint> {
        self.points
    }
}

/// Norm of the proximal gradient mapping
///
/// ```text
/// G_eta(x) = (1/eta) * (x - prox_{eta psi}(x - eta grad f(x)))
/// ```
///
/// which vanishes exactly at stationary points and reduces to
/// `||grad f(x)||` when `psi = 0`. Costs one full gradient (n component
/// evaluations); callers decide which counter to charge.
pub fn prox_gradient_norm(problem: &CompositeProblem, x: &DenseVector, eta: f64) -> f64 {
    assert!(eta > 0.0, "eta must be positive");
    let grad = problem.smooth_part_grad(x);
    let tau = problem.ell1_scale();
    let mut moved_sq = 0.0;
    for j in 0..x.len() {
        let stepped = x[j] - eta * grad[j];
        let proxed = soft_threshold(stepped, eta * tau);
        let diff = x[j] - proxed;
        moved_sq += diff * diff;
    }
    moved_sq.sqrt() / eta
}
