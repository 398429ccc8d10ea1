//! Accelerated variance-reduced inner solver for strongly convex
//! composites built from convex smooth components.
//!
//! Solves `min_x (1/n) sum_i fhat_i(x) + psihat(x)` where each `fhat_i` is
//! convex and `Lhat`-smooth and `psihat` is `sigma`-strongly convex. One
//! epoch takes a full-gradient snapshot and then runs `m` stochastic steps
//! coupling three sequences: a mirror sequence updated through the prox, a
//! plain gradient sequence with step `1/(3 Lhat)`, and the snapshot
//! anchor. The epoch output is the theta-weighted average of the gradient
//! sequence. All constants come from the closed forms in
//! [`make_params`]; nothing is tuned at run time.

use rand::Rng;
use thiserror::Error;

use crate::metrics::Recorder;
use crate::problem::{prox_shifted_l1, DenseVector};

#[derive(Debug, Error)]
pub enum KatyushaError {
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("divergent iterate at epoch {epoch}, iteration {iter}")]
    Divergence { epoch: u32, iter: usize },
}

/// The inner-solver constants. All of them are determined by
/// `(n, sigma, Lhat)` except the epoch count `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct KatyushaParams {
    pub tau1: f64,
    pub tau2: f64,
    pub eta: f64,
    pub theta: f64,
    pub m: usize,
    pub k: u32,
    pub sigma: f64,
    pub lhat: f64,
}

impl KatyushaParams {
    /// Stochastic gradient evaluations in one epoch: the snapshot plus two
    /// per inner iteration.
    pub fn epoch_cost(&self, n: usize) -> u64 {
        n as u64 + 2 * self.m as u64
    }

    /// Total evaluations for the configured number of epochs,
    /// `K * (n + 2m)`.
    pub fn total_cost(&self, n: usize) -> u64 {
        self.k as u64 * self.epoch_cost(n)
    }

    pub fn log_theta(&self) -> f64 {
        // theta = 1 + eta*sigma was formed by that addition, so the
        // subtraction is exact and log1p keeps precision for tiny
        // eta*sigma.
        (self.theta - 1.0).ln_1p()
    }
}

/// Closed-form parameter derivation:
///
/// ```text
/// tau2 = 1/2
/// tau1 = min{ sqrt(n sigma / (3 Lhat)), 1/2 }
/// eta = 1 / (3 tau1 Lhat)
/// theta = 1 + eta sigma
/// m = ceil( log(2 tau1 + 2/theta - 1) / log theta ) + 1
/// ```
pub fn make_params(n: usize, sigma: f64, lhat: f64, k: u32) -> Result<KatyushaParams, KatyushaError> {
    if n == 0 {
        return Err(KatyushaError::BadParams("n must be >= 1".into()));
    }
    if !(sigma > 0.0) || !(lhat > 0.0) {
        return Err(KatyushaError::BadParams(format!(
            "sigma and Lhat must be positive, got sigma={sigma}, Lhat={lhat}"
        )));
    }
    if sigma > lhat {
        return Err(KatyushaError::BadParams(format!(
            "sigma={sigma} exceeds Lhat={lhat}"
        )));
    }
    if k == 0 {
        return Err(KatyushaError::BadParams("K must be >= 1".into()));
    }
    let tau1 = (n as f64 * sigma / (3.0 * lhat)).sqrt().min(0.5);
    let tau2 = 0.5;
    let eta = 1.0 / (3.0 * tau1 * lhat);
    let eta_sigma = eta * sigma;
    let theta = 1.0 + eta_sigma;
    let log_theta = eta_sigma.ln_1p();
    let m = ((2.0 * tau1 + 2.0 / theta - 1.0).ln() / log_theta).ceil() as usize + 1;
    Ok(KatyushaParams {
        tau1,
        tau2,
        eta,
        theta,
        m,
        k,
        sigma,
        lhat,
    })
}

/// The strongly convex composite subproblem the inner solver works on.
/// `smooth_component_grad` is the gradient of one convex `Lhat`-smooth
/// component; `prox_step` solves
/// `argmin_z (1/2 eta)||z - center||^2 + <g, z> + psihat(z)` exactly.
pub trait InnerProblem {
    fn num_components(&self) -> usize;

    fn dim(&self) -> usize;

    fn smooth_component_grad(&self, i: usize, x: &DenseVector) -> DenseVector;

    /// Full smooth gradient `(1/n) sum_i grad fhat_i(x)`; counts as n
    /// evaluations wherever it is charged.
    fn smooth_full_grad(&self, x: &DenseVector) -> DenseVector {
        let n = self.num_components();
        let mut grad = DenseVector::zeros(self.dim());
        for i in 0..n {
            grad.add_scaled(1.0 / n as f64, &self.smooth_component_grad(i, x));
        }
        grad
    }

    fn prox_step(&self, center: &DenseVector, g: &DenseVector, eta: f64) -> DenseVector;

    /// Composite value `fhat(x) + psihat(x)`, for diagnostics and tests.
    fn objective(&self, x: &DenseVector) -> f64;
}

/// Incremental theta-weighted average of a vector sequence; keeps one
/// running vector instead of m iterates.
#[derive(Debug)]
struct EpochAverage {
    sum: DenseVector,
    total: f64,
    weight: f64,
    theta: f64,
}

impl EpochAverage {
    fn new(dim: usize, theta: f64) -> Self {
        Self {
            sum: DenseVector::zeros(dim),
            total: 0.0,
            weight: 1.0,
            theta,
        }
    }

    fn push(&mut self, y: &DenseVector) {
        self.sum.add_scaled(self.weight, y);
        self.total += self.weight;
        self.weight *= self.theta;
    }

    #[cfg(test)]
    fn weight_total(&self) -> f64 {
        self.total
    }

    fn finish(mut self) -> DenseVector {
        self.sum.scale(1.0 / self.total);
        self.sum
    }
}

#[derive(Debug)]
pub struct KatyushaOutcome {
    /// The last completed epoch average (`x0` if no epoch ran).
    pub x: DenseVector,
    pub epochs_run: u32,
    /// True when the recorder's budget stopped the run before `K` epochs.
    pub truncated: bool,
}

/// Run `K` epochs from `x0`, charging the recorder `n + 2m` evaluations
/// per epoch and stopping early (truncated) if the next epoch does not fit
/// the recorder's budget. Identical seed and inputs give a bit-identical
/// trajectory.
pub fn run<P: InnerProblem, R: Rng>(
    problem: &P,
    x0: &DenseVector,
    params: &KatyushaParams,
    rng: &mut R,
    recorder: &mut Recorder,
) -> Result<KatyushaOutcome, KatyushaError> {
    run_observed(problem, x0, params, rng, recorder, |_, _, _| {})
}

/// [`run`] with a per-epoch callback `(epoch index, epoch average,
/// recorder)`, which outer loops use to record trace points.
pub fn run_observed<P, R, F>(
    problem: &P,
    x0: &DenseVector,
    params: &KatyushaParams,
    rng: &mut R,
    recorder: &mut Recorder,
    mut on_epoch: F,
) -> Result<KatyushaOutcome, KatyushaError>
where
    P: InnerProblem,
    R: Rng,
    F: FnMut(u32, &DenseVector, &mut Recorder),
{
    let n = problem.num_components();
    let d = problem.dim();
    if x0.len() != d {
        return Err(KatyushaError::BadParams(format!(
            "x0 has dimension {}, problem has {}",
            x0.len(),
            d
        )));
    }
    let epoch_cost = params.epoch_cost(n);
    let c_y = 1.0 - params.tau1 - params.tau2;
    let inv_3lhat = 1.0 / (3.0 * params.lhat);

    let mut y = x0.clone();
    let mut zeta = x0.clone();
    let mut xtilde = x0.clone();
    let mut epochs_run = 0u32;
    let mut truncated = false;

    for epoch in 0..params.k {
        if !recorder.can_afford(epoch_cost) {
            truncated = true;
            break;
        }
        let snapshot_grad = problem.smooth_full_grad(&xtilde);
        recorder.charge(n as u64);
        if !snapshot_grad.is_finite() {
            return Err(KatyushaError::Divergence { epoch, iter: 0 });
        }
        let mut avg = EpochAverage::new(d, params.theta);
        let mut x = DenseVector::zeros(d);
        for t in 0..params.m {
            for j in 0..d {
                x[j] = params.tau1 * zeta[j] + params.tau2 * xtilde[j] + c_y * y[j];
            }
            let i = rng.random_range(0..n);
            let grad_at_x = problem.smooth_component_grad(i, &x);
            let grad_at_snapshot = problem.smooth_component_grad(i, &xtilde);
            recorder.charge(2);
            let mut vr_grad = snapshot_grad.clone();
            vr_grad.add_scaled(1.0, &grad_at_x);
            vr_grad.add_scaled(-1.0, &grad_at_snapshot);
            zeta = problem.prox_step(&zeta, &vr_grad, params.eta);
            // plain gradient step, deliberately without the composite part
            for j in 0..d {
                y[j] = x[j] - inv_3lhat * vr_grad[j];
            }
            if !(y.is_finite() && zeta.is_finite()) {
                return Err(KatyushaError::Divergence { epoch, iter: t });
            }
            avg.push(&y);
        }
        xtilde = avg.finish();
        epochs_run += 1;
        on_epoch(epoch, &xtilde, recorder);
    }

    Ok(KatyushaOutcome {
        x: xtilde,
        epochs_run,
        truncated,
    })
}

/// A strongly convex reference problem:
/// `(1/n) sum_i 1/2 (a_i^T x - b_i)^2 + (sigma/2) ||x||^2` with the
/// quadratic ridge carried by the composite part. Used by the contraction
/// and decrease tests against the exact minimizer from the dense oracle.
#[derive(Debug)]
pub struct RegularizedQuadratic<'a> {
    data: &'a crate::data::Dataset,
    sigma: f64,
}

impl<'a> RegularizedQuadratic<'a> {
    pub fn new(data: &'a crate::data::Dataset, sigma: f64) -> Self {
        Self { data, sigma }
    }
}

impl InnerProblem for RegularizedQuadratic<'_> {
    fn num_components(&self) -> usize {
        self.data.n()
    }

    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn smooth_component_grad(&self, i: usize, x: &DenseVector) -> DenseVector {
        let row = self.data.row(i);
        let resid = row.dot(x) - self.data.label(i);
        let mut grad = DenseVector::zeros(x.len());
        row.add_scaled_into(resid, &mut grad);
        grad
    }

    fn prox_step(&self, center: &DenseVector, g: &DenseVector, eta: f64) -> DenseVector {
        let anchor = DenseVector::zeros(center.len());
        prox_shifted_l1(center, g, eta, self.sigma, &anchor, 0.0)
            .expect("validated prox parameters")
    }

    fn objective(&self, x: &DenseVector) -> f64 {
        let n = self.data.n();
        let mut acc = 0.0;
        for i in 0..n {
            let r = self.data.row(i).dot(x) - self.data.label(i);
            acc += 0.5 * r * r;
        }
        acc / n as f64 + 0.5 * self.sigma * x.norm_sq()
    }
}
