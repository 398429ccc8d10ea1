//! The stagewise outer loop: at stage `s` it builds the strongly
//! convexified subproblem
//!
//! ```text
//! f_s(x) = phi(x) + (1/2 gamma) ||x - x_{s-1}||^2,   gamma = 1/(2 mu)
//! ```
//!
//! splits it as `(1/n) sum_i fhat_i + psihat` with
//! `fhat_i(x) = f_i(x) + (mu/2)||x - x_{s-1}||^2` (convex, `(L+mu)`-smooth)
//! and `psihat(x) = (mu/2)||x - x_{s-1}||^2 + psi(x)` (`mu`-strongly
//! convex), and warm-starts the inner solver at `x_{s-1}` for a
//! stage-dependent number of epochs. The returned point is `x_{tau+1}`
//! with `tau` drawn from stage-index weights `w_s = s^alpha`.

use rand::Rng;
use thiserror::Error;

use crate::katyusha::{self, InnerProblem, KatyushaError, KatyushaParams};
use crate::metrics::{Measure, Recorder};
use crate::problem::{prox_shifted_l1, CompositeProblem, DenseVector};

#[derive(Debug, Error)]
pub enum KatalystError {
    #[error("stagewise solver requires mu > 0 (got {0}); supply a mu floor for convex instances")]
    MuNotPositive(f64),
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("inner solver failed at stage {stage}: {source}")]
    Inner {
        stage: u32,
        #[source]
        source: KatyushaError,
    },
}

/// Outer-loop configuration. The run executes stages `s = 1..=stages+1`;
/// `stages` is the S in the selection weights `w_s = s^alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct KatalystConfig {
    /// S: the run executes S+1 stages.
    pub stages: u32,
    /// Weight exponent for the random stage selection, `w_s = s^alpha`.
    pub alpha: f64,
    /// Proximal-point parameter, `1/(2 mu)`.
    pub gamma: f64,
    /// Strong convexity handed to the inner solver (= mu).
    pub sigma: f64,
    /// Smoothness handed to the inner solver (= L + mu).
    pub lhat: f64,
    /// With `psi = 0` the stage epoch count loses its stage-dependent
    /// term.
    pub smooth_mode: bool,
}

impl KatalystConfig {
    pub fn from_problem(
        problem: &CompositeProblem,
        stages: u32,
        alpha: f64,
    ) -> Result<Self, KatalystError> {
        let mu = problem.mu();
        if !(mu > 0.0) {
            return Err(KatalystError::MuNotPositive(mu));
        }
        if !(alpha > 0.0) {
            return Err(KatalystError::BadConfig(format!(
                "alpha must be > 0, got {alpha}"
            )));
        }
        Ok(Self {
            stages,
            alpha,
            gamma: 1.0 / (2.0 * mu),
            sigma: mu,
            lhat: problem.smoothness() + mu,
            smooth_mode: problem.ell1_scale() == 0.0,
        })
    }

    /// Weak-convexity modulus the config was built from.
    pub fn mu(&self) -> f64 {
        self.sigma
    }

    /// Smoothness of the original components, `Lhat - mu`.
    pub fn smoothness(&self) -> f64 {
        self.lhat - self.sigma
    }
}

/// What one stage did: endpoints, epoch count, cumulative gradient count,
/// and the stationarity proxy `||x_{s-1} - x_s|| / gamma`.
#[derive(Debug, Clone)]
pub struct StageRecord {
    pub s: u32,
    pub x_start: DenseVector,
    pub x_end: DenseVector,
    pub k_s: u32,
    pub grads: u64,
    pub objective_end: f64,
    pub moreau_proxy: f64,
    /// `||grad phi(x_s)||`, tracked only when `psi = 0`.
    pub grad_phi_norm: Option<f64>,
    /// False when the budget cut the stage short of its scheduled epochs.
    pub completed: bool,
}

/// The Moreau-envelope gradient proxy of a stage,
/// `||x_start - x_end|| / gamma`.
pub fn moreau_grad_proxy(rec: &StageRecord, gamma: f64) -> f64 {
    rec.x_start.dist(&rec.x_end) / gamma
}

/// The decrease target `D_s` for stage `s`:
/// `max{24 Lhat/mu, 2 Lhat^3/mu^3, 8 L^2 s / mu^2}`, with the last term
/// dropped in smooth mode.
pub fn stage_threshold(s: u32, cfg: &KatalystConfig) -> f64 {
    let mu = cfg.sigma;
    let ratio = cfg.lhat / mu;
    let mut d = (24.0 * ratio).max(2.0 * ratio * ratio * ratio);
    if !cfg.smooth_mode {
        let l = cfg.smoothness();
        d = d.max(8.0 * l * l * s as f64 / (mu * mu));
    }
    d
}

/// Epochs for stage `s`: `ceil(log(D_s) / (m log theta))`, never below 1.
pub fn stage_epochs(s: u32, cfg: &KatalystConfig, m: usize, theta: f64) -> u32 {
    let log_theta = (theta - 1.0).ln_1p();
    let k = (stage_threshold(s, cfg).ln() / (m as f64 * log_theta)).ceil();
    (k as u32).max(1)
}

/// Selection probabilities `p_tau = w_{tau+1} / sum_k w_{k+1}` over
/// `tau = 0..=s_max` with `w_s = s^alpha`.
pub fn selection_probabilities(s_max: u32, alpha: f64) -> Vec<f64> {
    let weights: Vec<f64> = (0..=s_max).map(|t| ((t + 1) as f64).powf(alpha)).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

fn sample_tau<R: Rng>(s_max: u32, alpha: f64, rng: &mut R) -> u32 {
    let probs = selection_probabilities(s_max, alpha);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (tau, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return tau as u32;
        }
    }
    s_max
}

/// One stage's strongly convex subproblem, exposed to the inner solver.
#[derive(Debug)]
pub struct StageSubproblem<'a> {
    problem: &'a CompositeProblem,
    anchor: DenseVector,
    mu: f64,
    /// Strong convexity of the composite part. Algebraically
    /// `gamma^{-1} - mu = mu` under `gamma = 1/(2 mu)`.
    sigma_psi: f64,
}

impl<'a> StageSubproblem<'a> {
    pub fn new(problem: &'a CompositeProblem, anchor: DenseVector) -> Self {
        let mu = problem.mu();
        Self {
            problem,
            anchor,
            mu,
            sigma_psi: mu,
        }
    }

    pub fn anchor(&self) -> &DenseVector {
        &self.anchor
    }

    pub fn sigma_psi(&self) -> f64 {
        self.sigma_psi
    }

    /// `f_s(x)` evaluated through the original objective:
    /// `phi(x) + (1/2 gamma) ||x - anchor||^2` with `1/(2 gamma) = mu`.
    pub fn value(&self, x: &DenseVector) -> f64 {
        self.problem.objective(x) + self.mu * x.dist_sq(&self.anchor)
    }

    /// `f_s(x)` through the split the inner solver sees:
    /// `(1/n) sum_i fhat_i(x) + psihat(x)`.
    pub fn decomposed_value(&self, x: &DenseVector) -> f64 {
        let n = self.problem.n();
        let shift = 0.5 * self.mu * x.dist_sq(&self.anchor);
        let mut smooth = 0.0;
        for i in 0..n {
            smooth += self.problem.f_i_value(i, x) + shift;
        }
        smooth /= n as f64;
        let psihat = 0.5 * self.sigma_psi * x.dist_sq(&self.anchor)
            + self.problem.ell1_scale() * x.l1_norm();
        smooth + psihat
    }
}

impl InnerProblem for StageSubproblem<'_> {
    fn num_components(&self) -> usize {
        self.problem.n()
    }

    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn smooth_component_grad(&self, i: usize, x: &DenseVector) -> DenseVector {
        let mut grad = self.problem.f_i_grad(i, x);
        for j in 0..grad.len() {
            grad[j] += self.mu * (x[j] - self.anchor[j]);
        }
        grad
    }

    fn smooth_full_grad(&self, x: &DenseVector) -> DenseVector {
        let mut grad = self.problem.smooth_part_grad(x);
        for j in 0..grad.len() {
            grad[j] += self.mu * (x[j] - self.anchor[j]);
        }
        grad
    }

    fn prox_step(&self, center: &DenseVector, g: &DenseVector, eta: f64) -> DenseVector {
        prox_shifted_l1(
            center,
            g,
            eta,
            self.sigma_psi,
            &self.anchor,
            self.problem.ell1_scale(),
        )
        .expect("validated prox parameters")
    }

    fn objective(&self, x: &DenseVector) -> f64 {
        self.value(x)
    }
}

/// Result of a full outer run.
#[derive(Debug)]
pub struct KatalystRun {
    /// `x_{tau+1}`, the randomly selected stage output (the start point if
    /// no stage completed within budget).
    pub solution: DenseVector,
    pub tau: u32,
    /// `x` after the last epoch that ran, whether or not its stage
    /// completed.
    pub final_iterate: DenseVector,
    pub records: Vec<StageRecord>,
    pub truncated: bool,
    /// Evaluations per inner epoch, `n + 2m`.
    pub epoch_cost: u64,
}

/// Run stages `1..=S+1` from `x0`, recording one trace point per inner
/// epoch (objective of the original problem; running Moreau proxy against
/// the stage anchor). Stops early when the recorder's budget cannot fit
/// the next epoch.
pub fn run_katalyst<R: Rng>(
    problem: &CompositeProblem,
    x0: &DenseVector,
    cfg: &KatalystConfig,
    rng: &mut R,
    recorder: &mut Recorder,
) -> Result<KatalystRun, KatalystError> {
    if !(cfg.sigma > 0.0) {
        return Err(KatalystError::MuNotPositive(cfg.sigma));
    }
    let n = problem.n();
    let base = katyusha::make_params(n, cfg.sigma, cfg.lhat, 1)
        .map_err(|e| KatalystError::BadConfig(e.to_string()))?;
    let epoch_cost = base.epoch_cost(n);

    let mut x_prev = x0.clone();
    let mut records: Vec<StageRecord> = Vec::new();
    let mut truncated = false;

    for s in 1..=cfg.stages + 1 {
        let k_s = stage_epochs(s, cfg, base.m, base.theta);
        let params = KatyushaParams { k: k_s, ..base.clone() };
        let sub = StageSubproblem::new(problem, x_prev.clone());
        let gamma = cfg.gamma;
        let outcome = {
            let anchor = sub.anchor().clone();
            katyusha::run_observed(&sub, &x_prev, &params, rng, recorder, |epoch, xt, rec| {
                let objective = problem.objective(xt);
                let proxy = xt.dist(&anchor) / gamma;
                rec.record(s, epoch + 1, objective, proxy, Measure::MoreauProxy);
            })
            .map_err(|source| KatalystError::Inner { stage: s, source })?
        };
        if outcome.epochs_run > 0 {
            let x_end = outcome.x;
            let grad_phi_norm = if cfg.smooth_mode {
                let g = problem.smooth_part_grad(&x_end);
                recorder.charge_diag(n as u64);
                Some(g.norm())
            } else {
                None
            };
            records.push(StageRecord {
                s,
                x_start: x_prev.clone(),
                x_end: x_end.clone(),
                k_s: outcome.epochs_run,
                grads: recorder.grads(),
                objective_end: problem.objective(&x_end),
                moreau_proxy: x_prev.dist(&x_end) / cfg.gamma,
                grad_phi_norm,
                completed: !outcome.truncated,
            });
            x_prev = x_end;
        }
        if outcome.truncated {
            truncated = true;
            break;
        }
    }

    let completed = records.iter().filter(|r| r.completed).count();
    let (tau, solution) = if completed == 0 {
        (0, x0.clone())
    } else {
        let tau = sample_tau(completed as u32 - 1, cfg.alpha, rng);
        (tau, records[tau as usize].x_end.clone())
    };

    Ok(KatalystRun {
        solution,
        tau,
        final_iterate: x_prev,
        records,
        truncated,
        epoch_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, SparseRow};
    use crate::problem::{LossKind, RegKind, Regularizer};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_config(mu: f64, lhat: f64, stages: u32, smooth: bool) -> KatalystConfig {
        KatalystConfig {
            stages,
            alpha: 1.0,
            gamma: 1.0 / (2.0 * mu),
            sigma: mu,
            lhat,
            smooth_mode: smooth,
        }
    }

    #[test]
    fn stage_threshold_hand_values() {
        // Lhat/mu = 10, smooth: D = max(240, 2000) = 2000
        let cfg = test_config(0.1, 1.0, 0, true);
        assert!((stage_threshold(1, &cfg) - 2000.0).abs() < 1e-9);
        // nonsmooth s=4 with L = 0.9: 8 * 0.81 * 4 / 0.01 = 2592
        let cfg = test_config(0.1, 1.0, 0, false);
        assert!((stage_threshold(4, &cfg) - 2592.0).abs() < 1e-9);
    }

    #[test]
    fn stage_epochs_hand_values() {
        // constants from (n=100, sigma=0.1, Lhat=1): m=11, theta=1+1/15
        let base = crate::katyusha::make_params(100, 0.1, 1.0, 1).unwrap();
        assert_eq!(base.m, 11);
        let cfg = test_config(0.1, 1.0, 0, true);
        assert_eq!(stage_epochs(1, &cfg, base.m, base.theta), 11);
        let cfg = test_config(0.1, 1.0, 0, false);
        assert_eq!(stage_epochs(4, &cfg, base.m, base.theta), 12);
        assert_eq!(stage_epochs(8, &cfg, base.m, base.theta), 13);

        // constants from (n=100, sigma=0.01, Lhat=1): m=105
        let base = crate::katyusha::make_params(100, 0.01, 1.0, 1).unwrap();
        let cfg = test_config(0.01, 1.0, 0, false);
        assert_eq!(stage_epochs(1, &cfg, base.m, base.theta), 21);
    }

    #[test]
    fn stage_epochs_at_least_one_and_doubling_bound() {
        let base = crate::katyusha::make_params(100, 0.1, 1.0, 1).unwrap();
        let cfg = test_config(0.1, 1.0, 0, false);
        let step_cap = (2f64.ln() / (base.m as f64 * base.log_theta())).ceil() as u32 + 1;
        let mut prev = stage_epochs(4, &cfg, base.m, base.theta);
        assert!(prev >= 1);
        for s in [8u32, 16, 32, 64] {
            let k = stage_epochs(s, &cfg, base.m, base.theta);
            assert!(k >= 1);
            assert!(k >= prev, "K_s must not shrink as s grows");
            assert!(k - prev <= step_cap, "s={s}: jump {} > {step_cap}", k - prev);
            prev = k;
        }
    }

    #[test]
    fn selection_probabilities_triangular_for_unit_alpha() {
        let p = selection_probabilities(2, 1.0);
        assert_eq!(p.len(), 3);
        assert!((p[0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((p[1] - 2.0 / 6.0).abs() < 1e-15);
        assert!((p[2] - 3.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn sampled_tau_matches_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0usize; 3];
        let draws = 30_000;
        for _ in 0..draws {
            counts[sample_tau(2, 1.0, &mut rng) as usize] += 1;
        }
        let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
        for (f, p) in freqs.iter().zip([1.0 / 6.0, 2.0 / 6.0, 0.5]) {
            assert!((f - p).abs() < 0.02, "freqs {freqs:?}");
        }
    }

    fn synthetic_hinge_problem(reg: Regularizer, seed: u64, n: usize, d: usize) -> CompositeProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let mut idx = Vec::new();
            let mut vals = Vec::new();
            for j in 0..d {
                if rng.random::<f64>() < 0.4 {
                    idx.push(j);
                    vals.push(rng.random_range(-1.0..1.0));
                }
            }
            let norm_sq: f64 = vals.iter().map(|v| v * v).sum();
            if norm_sq > 1.0 {
                let inv = norm_sq.sqrt().recip();
                for v in &mut vals {
                    *v *= inv;
                }
            }
            rows.push(SparseRow::new(idx, vals).unwrap());
            labels.push(if rng.random::<bool>() { 1.0 } else { -1.0 });
        }
        let data = Dataset::new(rows, labels, d).unwrap();
        CompositeProblem::new(data, LossKind::SquaredHinge, reg).unwrap()
    }

    #[test]
    fn stage_value_decomposition_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for kind in [RegKind::Lsp, RegKind::Tl1] {
            let reg = Regularizer::new(kind, 1.0, 0.05).unwrap();
            let p = synthetic_hinge_problem(reg, 3, 12, 6);
            let anchor =
                DenseVector::from((0..6).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
            let sub = StageSubproblem::new(&p, anchor);
            for _ in 0..25 {
                let x = DenseVector::from(
                    (0..6).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>(),
                );
                let direct = sub.value(&x);
                let split = sub.decomposed_value(&x);
                assert!(
                    (direct - split).abs() <= 1e-10 * direct.abs().max(1.0),
                    "{direct} vs {split}"
                );
            }
        }
    }

    #[test]
    fn stage_composite_modulus_is_mu() {
        let p = synthetic_hinge_problem(Regularizer::lsp(1.0, 0.1).unwrap(), 5, 8, 4);
        let sub = StageSubproblem::new(&p, DenseVector::zeros(4));
        assert_eq!(sub.sigma_psi(), p.mu());
        // and the gamma route agrees to roundoff
        let gamma = 1.0 / (2.0 * p.mu());
        let via_gamma = 1.0 / gamma - p.mu();
        assert!((via_gamma - sub.sigma_psi()).abs() <= 1e-15 * p.mu().max(1.0));
    }

    #[test]
    fn single_stage_run_selects_it_surely() {
        let p = synthetic_hinge_problem(Regularizer::lsp(1.0, 0.2).unwrap(), 7, 15, 5);
        let cfg = KatalystConfig::from_problem(&p, 0, 1.0).unwrap();
        let mut rec = Recorder::new("katalyst");
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let run = run_katalyst(&p, &DenseVector::zeros(5), &cfg, &mut rng, &mut rec).unwrap();
        assert_eq!(run.records.len(), 1);
        assert_eq!(run.tau, 0);
        assert_eq!(run.solution, run.records[0].x_end);
        assert_eq!(run.solution, run.final_iterate);
        assert!(!run.truncated);
    }

    #[test]
    fn rejects_mu_zero() {
        let p = synthetic_hinge_problem(Regularizer::none(), 9, 6, 3);
        assert!(matches!(
            KatalystConfig::from_problem(&p, 1, 1.0),
            Err(KatalystError::MuNotPositive(_))
        ));
    }

    #[test]
    fn per_stage_objective_decreases_in_seed_mean() {
        // Convex components (least squares) with the weak convexity added
        // artificially through the mu floor.
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let rows: Vec<SparseRow> = (0..20)
            .map(|_| {
                let vals: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
                SparseRow::new((0..4).collect(), vals).unwrap()
            })
            .collect();
        let labels: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = Dataset::new(rows, labels, 4).unwrap();
        let p = CompositeProblem::new(data, LossKind::LeastSquares, Regularizer::none())
            .unwrap()
            .with_mu_floor(0.05);
        let cfg = KatalystConfig::from_problem(&p, 3, 1.0).unwrap();
        let seeds = 20;
        let stages = (cfg.stages + 1) as usize;
        let mut mean_drop = vec![0.0f64; stages];
        for seed in 0..seeds {
            let mut rec = Recorder::new("katalyst");
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let run = run_katalyst(&p, &DenseVector::zeros(4), &cfg, &mut rng, &mut rec).unwrap();
            assert_eq!(run.records.len(), stages);
            assert!(run.records.windows(2).all(|w| w[0].grads <= w[1].grads));
            for (k, r) in run.records.iter().enumerate() {
                mean_drop[k] +=
                    (p.objective(&r.x_end) - p.objective(&r.x_start)) / seeds as f64;
            }
        }
        for (k, d) in mean_drop.iter().enumerate() {
            assert!(*d <= 1e-8, "stage {} mean objective change {d}", k + 1);
        }
    }

    #[test]
    fn moreau_proxy_trivia() {
        let rec = StageRecord {
            s: 1,
            x_start: DenseVector::from(vec![1.0, 2.0]),
            x_end: DenseVector::from(vec![1.0, 2.0]),
            k_s: 1,
            grads: 0,
            objective_end: 0.0,
            moreau_proxy: 0.0,
            grad_phi_norm: None,
            completed: true,
        };
        assert_eq!(moreau_grad_proxy(&rec, 0.5), 0.0);
        let rec2 = StageRecord {
            x_end: DenseVector::from(vec![1.0, 4.0]),
            ..rec
        };
        let full = moreau_grad_proxy(&rec2, 1.0);
        let halved = moreau_grad_proxy(&rec2, 0.5);
        assert!((halved - 2.0 * full).abs() < 1e-15);
    }

    #[test]
    fn moreau_proxy_matches_closed_form_on_line() {
        // phi(x) = 1/2 (x - 2)^2, mu floored at 0.25, gamma = 2.
        // prox_{gamma phi}(0) solves (z-2) + z/2 = 0: z = 4/3, so
        // ||grad phi_gamma(0)|| = (4/3)/2 = 2/3.
        let data = Dataset::new(
            vec![SparseRow::new(vec![0], vec![1.0]).unwrap()],
            vec![2.0],
            1,
        )
        .unwrap();
        let p = CompositeProblem::new(data, LossKind::LeastSquares, Regularizer::none())
            .unwrap()
            .with_mu_floor(0.25);
        let cfg = KatalystConfig::from_problem(&p, 0, 1.0).unwrap();
        assert_eq!(cfg.gamma, 2.0);
        let mut rec = Recorder::new("katalyst");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let run = run_katalyst(&p, &DenseVector::zeros(1), &cfg, &mut rng, &mut rec).unwrap();
        let proxy = run.records[0].moreau_proxy;
        let exact = 2.0 / 3.0;
        assert!(
            (proxy - exact).abs() <= 0.1 * exact,
            "proxy {proxy} vs exact {exact}"
        );
    }

    #[test]
    fn smooth_mode_tracks_decaying_gradient_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let rows: Vec<SparseRow> = (0..30)
            .map(|_| {
                let vals: Vec<f64> = (0..5).map(|_| rng.random_range(-0.5..0.5)).collect();
                SparseRow::new((0..5).collect(), vals).unwrap()
            })
            .collect();
        let labels: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = Dataset::new(rows, labels, 5).unwrap();
        let p = CompositeProblem::new(data, LossKind::LeastSquares, Regularizer::none())
            .unwrap()
            .with_mu_floor(0.05);

        let weighted_grad_sq = |stages: u32, seed: u64| -> f64 {
            let cfg = KatalystConfig::from_problem(&p, stages, 1.0).unwrap();
            assert!(cfg.smooth_mode);
            let mut rec = Recorder::new("katalyst");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let run = run_katalyst(&p, &DenseVector::zeros(5), &cfg, &mut rng, &mut rec).unwrap();
            let probs = selection_probabilities(stages, 1.0);
            run.records
                .iter()
                .zip(&probs)
                .map(|(r, p)| {
                    let g = r.grad_phi_norm.expect("tracked in smooth mode");
                    p * g * g
                })
                .sum()
        };
        let mut small = 0.0;
        let mut large = 0.0;
        for seed in 0..5 {
            small += weighted_grad_sq(2, 40 + seed) / 5.0;
            large += weighted_grad_sq(16, 40 + seed) / 5.0;
        }
        assert!(
            large < small,
            "expected decay with more stages: S=2 gives {small}, S=16 gives {large}"
        );
    }

    #[test]
    fn budget_truncation_reports_partial_stage() {
        let p = synthetic_hinge_problem(Regularizer::lsp(1.0, 0.2).unwrap(), 18, 15, 5);
        let cfg = KatalystConfig::from_problem(&p, 10, 1.0).unwrap();
        let base = crate::katyusha::make_params(p.n(), cfg.sigma, cfg.lhat, 1).unwrap();
        let cost = base.epoch_cost(p.n());
        let mut rec = Recorder::new("katalyst").with_budget(2 * cost);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let run = run_katalyst(&p, &DenseVector::zeros(5), &cfg, &mut rng, &mut rec).unwrap();
        assert!(run.truncated);
        assert_eq!(rec.grads(), 2 * cost);
        let k1 = stage_epochs(1, &cfg, base.m, base.theta);
        if k1 > 2 {
            // budget died inside stage 1
            assert_eq!(run.records.len(), 1);
            assert!(!run.records[0].completed);
            assert_eq!(run.tau, 0);
            assert_eq!(run.solution, DenseVector::zeros(5));
        }
    }
}
