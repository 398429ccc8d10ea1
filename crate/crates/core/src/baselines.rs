//! proxSVRG comparison solvers.
//!
//! Standard proximal SVRG on the original composite `phi`: each epoch
//! recomputes the full smooth gradient at a snapshot, then takes
//! `inner_len` variance-reduced proximal steps. Two variants with their
//! theoretical constants: a small-step one with batch size 1 and step
//! `1/(3 L n^{2/3})`, and a mini-batch one with batch `ceil(n^{2/3})` and
//! step `1/(3L)`. The next snapshot is the last inner iterate.

use rand::Rng;
use thiserror::Error;

use crate::metrics::{prox_gradient_norm, Measure, Recorder};
use crate::problem::{soft_threshold, CompositeProblem, DenseVector};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("divergent iterate at epoch {epoch}, iteration {iter}")]
    Divergence { epoch: u32, iter: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxSvrgVariant {
    /// Batch 1, step `1/(3 L n^{2/3})`.
    SmallStep,
    /// Batch `ceil(n^{2/3})`, step `1/(3 L)`.
    MiniBatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxSvrgConfig {
    pub variant: ProxSvrgVariant,
    pub epochs: u32,
    pub inner_len: usize,
    pub step: f64,
    pub batch: usize,
}

impl ProxSvrgConfig {
    /// Small-step variant at its theoretical constants; `inner_len`
    /// defaults to n.
    pub fn small_step(n: usize, l: f64, epochs: u32) -> Self {
        Self {
            variant: ProxSvrgVariant::SmallStep,
            epochs,
            inner_len: n,
            step: 1.0 / (3.0 * l * (n as f64).powf(2.0 / 3.0)),
            batch: 1,
        }
    }

    /// Mini-batch variant at its theoretical constants; `inner_len`
    /// defaults to n.
    pub fn mini_batch(n: usize, l: f64, epochs: u32) -> Self {
        Self {
            variant: ProxSvrgVariant::MiniBatch,
            epochs,
            inner_len: n,
            step: 1.0 / (3.0 * l),
            batch: (n as f64).powf(2.0 / 3.0).ceil() as usize,
        }
    }

    /// Override the step size for sensitivity studies.
    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_inner_len(mut self, inner_len: usize) -> Self {
        self.inner_len = inner_len;
        self
    }

    /// Evaluations per epoch: the snapshot plus `2 * batch` per inner
    /// step.
    pub fn epoch_cost(&self, n: usize) -> u64 {
        n as u64 + 2 * self.batch as u64 * self.inner_len as u64
    }
}

#[derive(Debug)]
pub struct ProxSvrgOutcome {
    pub x: DenseVector,
    pub epochs_run: u32,
    pub truncated: bool,
}

/// Run up to `cfg.epochs` epochs from `x0`, stopping early when the
/// recorder's budget cannot fit another epoch. One trace point per epoch
/// carries the objective and the proximal gradient norm at `eta = 1/L`
/// (charged to the diagnostic counter).
pub fn run_prox_svrg<R: Rng>(
    problem: &CompositeProblem,
    x0: &DenseVector,
    cfg: &ProxSvrgConfig,
    rng: &mut R,
    recorder: &mut Recorder,
) -> Result<ProxSvrgOutcome, BaselineError> {
    if cfg.batch == 0 || cfg.inner_len == 0 {
        return Err(BaselineError::BadConfig(
            "batch and inner_len must be positive".into(),
        ));
    }
    if !(cfg.step >= 0.0) {
        return Err(BaselineError::BadConfig(format!(
            "step must be non-negative, got {}",
            cfg.step
        )));
    }
    let n = problem.n();
    let d = problem.dim();
    let tau = problem.ell1_scale();
    let epoch_cost = cfg.epoch_cost(n);
    let inv_batch = 1.0 / cfg.batch as f64;

    let mut x = x0.clone();
    let mut epochs_run = 0u32;
    let mut truncated = false;

    for epoch in 1..=cfg.epochs {
        if !recorder.can_afford(epoch_cost) {
            truncated = true;
            break;
        }
        let snapshot = x.clone();
        let full_grad = problem.smooth_part_grad(&snapshot);
        recorder.charge(n as u64);
        for iter in 0..cfg.inner_len {
            let mut grad = full_grad.clone();
            for _ in 0..cfg.batch {
                let i = rng.random_range(0..n);
                let at_x = problem.f_i_grad(i, &x);
                let at_snapshot = problem.f_i_grad(i, &snapshot);
                recorder.charge(2);
                grad.add_scaled(inv_batch, &at_x);
                grad.add_scaled(-inv_batch, &at_snapshot);
            }
            for j in 0..d {
                x[j] = soft_threshold(x[j] - cfg.step * grad[j], cfg.step * tau);
            }
            if !x.is_finite() {
                return Err(BaselineError::Divergence { epoch, iter });
            }
        }
        epochs_run += 1;
        let objective = problem.objective(&x);
        let pg = prox_gradient_norm(problem, &x, 1.0 / problem.smoothness());
        recorder.charge_diag(n as u64);
        recorder.record(0, epoch, objective, pg, Measure::ProxGrad);
    }

    Ok(ProxSvrgOutcome {
        x,
        epochs_run,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, SparseRow};
    use crate::problem::{LossKind, Regularizer};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn least_squares_problem(n: usize, d: usize, seed: u64, reg: Regularizer) -> CompositeProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<SparseRow> = (0..n)
            .map(|_| {
                let mut vals: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
                for v in &mut vals {
                    *v /= norm;
                }
                SparseRow::new((0..d).collect(), vals).unwrap()
            })
            .collect();
        let labels: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = Dataset::new(rows, labels, d).unwrap();
        CompositeProblem::new(data, LossKind::LeastSquares, reg).unwrap()
    }

    #[test]
    fn theoretical_constants() {
        let cfg = ProxSvrgConfig::small_step(1000, 2.0, 5);
        assert_eq!(cfg.batch, 1);
        assert_eq!(cfg.inner_len, 1000);
        assert!((cfg.step - 1.0 / (6.0 * 100.0)).abs() < 1e-15);

        let cfg = ProxSvrgConfig::mini_batch(1000, 2.0, 5);
        assert_eq!(cfg.batch, 100);
        assert!((cfg.step - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_count_closed_form() {
        // 2 epochs, n=10, batch=1, inner_len=10 -> 2*(10 + 2*10) = 60
        let p = least_squares_problem(10, 3, 1, Regularizer::none());
        let cfg = ProxSvrgConfig::small_step(10, p.smoothness(), 2);
        assert_eq!(cfg.epoch_cost(10) * 2, 60);
        let mut rec = Recorder::new("prox_svrg");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = run_prox_svrg(&p, &DenseVector::zeros(3), &cfg, &mut rng, &mut rec).unwrap();
        assert_eq!(out.epochs_run, 2);
        assert_eq!(rec.grads(), 60);
    }

    #[test]
    fn zero_step_stays_at_start() {
        for reg in [Regularizer::none(), Regularizer::l1(0.5).unwrap()] {
            let p = least_squares_problem(8, 3, 2, reg);
            let cfg = ProxSvrgConfig::small_step(8, p.smoothness(), 2).with_step(0.0);
            let x0 = DenseVector::from(vec![1.0, -2.0, 0.5]);
            let mut rec = Recorder::new("prox_svrg");
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let out = run_prox_svrg(&p, &x0, &cfg, &mut rng, &mut rec).unwrap();
            assert_eq!(out.x, x0);
        }
    }

    #[test]
    fn mean_objective_decreases_per_epoch_on_convex_instance() {
        let p = least_squares_problem(20, 4, 7, Regularizer::none());
        let epochs = 4u32;
        let cfg = ProxSvrgConfig::small_step(20, p.smoothness(), epochs);
        let seeds = 15;
        let mut curves = vec![0.0f64; epochs as usize + 1];
        for seed in 0..seeds {
            let mut rec = Recorder::new("prox_svrg");
            let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
            let x0 = DenseVector::zeros(4);
            curves[0] += p.objective(&x0) / seeds as f64;
            run_prox_svrg(&p, &x0, &cfg, &mut rng, &mut rec).unwrap();
            for pt in rec.points() {
                curves[pt.epoch as usize] += pt.objective / seeds as f64;
            }
        }
        for w in curves.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "epoch means not decreasing: {curves:?}");
        }
    }

    #[test]
    fn deterministic_under_seed_and_budget_truncation() {
        let p = least_squares_problem(12, 3, 9, Regularizer::l1(0.01).unwrap());
        let cfg = ProxSvrgConfig::mini_batch(12, p.smoothness(), 10);
        let cost = cfg.epoch_cost(12);
        let run_once = || {
            let mut rec = Recorder::new("prox_svrg_mb").with_budget(2 * cost + 1);
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let out = run_prox_svrg(&p, &DenseVector::zeros(3), &cfg, &mut rng, &mut rec).unwrap();
            (out.x, out.epochs_run, out.truncated, rec.grads())
        };
        let (x1, e1, t1, g1) = run_once();
        let (x2, e2, t2, g2) = run_once();
        assert_eq!(x1, x2);
        assert_eq!((e1, t1, g1), (e2, t2, g2));
        assert_eq!(e1, 2);
        assert!(t1);
        assert_eq!(g1, 2 * cost);
    }
}
