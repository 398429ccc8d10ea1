//! The composite objective `phi = (1/n) sum_i f_i + psi` with
//! `f_i = loss_i - r2` and `psi = ell1_scale * ||.||_1`, its gradients,
//! prox operators, and the derived constants `L` and `mu`.
//!
//! The nonconvex penalties are handled through their difference-of-convex
//! split `lambda * R = r1 - r2`: `r1` is a scaled L1 norm and `r2` is
//! smooth and convex. Folding `-r2` into the smooth components makes each
//! `f_i` weakly convex with a closed-form modulus `mu`, which is exactly
//! what the stagewise solver needs.

use thiserror::Error;

use crate::data::{max_row_norm_sq, Dataset};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("bad regularizer: {0}")]
    BadRegularizer(String),
    #[error("r2 is only defined for LSP and TL1, not {0:?}")]
    R2Undefined(RegKind),
    #[error("squared hinge loss requires labels in {{-1,+1}}; label {value} at row {index}")]
    NonSignLabel { index: usize, value: f64 },
    #[error("prox step size must be positive, got {0}")]
    BadProxStep(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// A dense iterate or gradient in R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    entries: Vec<f64>,
}

impl DenseVector {
    pub fn zeros(d: usize) -> Self {
        Self {
            entries: vec![0.0; d],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.entries.iter()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|v| v.abs()).sum()
    }

    pub fn dist_sq(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn dist(&self, other: &Self) -> f64 {
        self.dist_sq(other).sqrt()
    }

    /// `self += c * other`
    pub fn add_scaled(&mut self, c: f64, other: &Self) {
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in &mut self.entries {
            *a *= c;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(entries: Vec<f64>) -> Self {
        Self { entries }
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.entries[i]
    }
}

impl std::ops::IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.entries[i]
    }
}

/// `sign(x)` with `sign(0) = 0`. Both smooth penalty gradients are defined
/// as 0 at the origin, where their one-sided limits agree.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `sign(v) * max(|v| - t, 0)`
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    sign(v) * (v.abs() - t).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `1/2 * max(0, 1 - b a^T x)^2`
    SquaredHinge,
    /// `1/2 * (a^T x - b)^2`
    LeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegKind {
    None,
    L1,
    /// Log-sum penalty `R(x) = sum_j log(beta + |x_j|)`
    Lsp,
    /// Transformed L1 `R(x) = sum_j (beta+1)|x_j| / (beta + |x_j|)`
    Tl1,
}

/// A sparsity penalty `lambda * R(x)` in difference-of-convex form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularizer {
    pub kind: RegKind,
    /// Shape parameter; unused for `None`/`L1`.
    pub beta: f64,
    pub lambda: f64,
}

impl Regularizer {
    pub fn none() -> Self {
        Self {
            kind: RegKind::None,
            beta: 1.0,
            lambda: 0.0,
        }
    }

    pub fn l1(lambda: f64) -> Result<Self, ProblemError> {
        Self::new(RegKind::L1, 1.0, lambda)
    }

    pub fn lsp(beta: f64, lambda: f64) -> Result<Self, ProblemError> {
        Self::new(RegKind::Lsp, beta, lambda)
    }

    pub fn tl1(beta: f64, lambda: f64) -> Result<Self, ProblemError> {
        Self::new(RegKind::Tl1, beta, lambda)
    }

    pub fn new(kind: RegKind, beta: f64, lambda: f64) -> Result<Self, ProblemError> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(ProblemError::BadRegularizer(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        if matches!(kind, RegKind::Lsp | RegKind::Tl1) && !(beta > 0.0) {
            return Err(ProblemError::BadRegularizer(format!(
                "beta must be > 0 for {kind:?}, got {beta}"
            )));
        }
        Ok(Self { kind, beta, lambda })
    }

    /// Weak-convexity modulus of `f_i = loss_i - r2`: the smoothness
    /// constant of `r2`.
    pub fn mu(&self) -> f64 {
        match self.kind {
            RegKind::None | RegKind::L1 => 0.0,
            RegKind::Lsp => self.lambda / (self.beta * self.beta),
            RegKind::Tl1 => 2.0 * (self.beta + 1.0) * self.lambda / (self.beta * self.beta),
        }
    }

    /// Coefficient of `||x||_1` in `psi = r1`.
    pub fn ell1_scale(&self) -> f64 {
        match self.kind {
            RegKind::None => 0.0,
            RegKind::L1 => self.lambda,
            RegKind::Lsp => self.lambda / self.beta,
            RegKind::Tl1 => self.lambda * (self.beta + 1.0) / self.beta,
        }
    }

    fn has_r2(&self) -> bool {
        matches!(self.kind, RegKind::Lsp | RegKind::Tl1) && self.lambda > 0.0
    }

    /// Per-coordinate value of the smooth convex part `r2`.
    fn r2_value_at(&self, x: f64) -> f64 {
        let (b, lam) = (self.beta, self.lambda);
        let a = x.abs();
        match self.kind {
            RegKind::Lsp => lam * (a / b - (b + a).ln()),
            RegKind::Tl1 => lam * (b + 1.0) * a * a / (b * (b + a)),
            _ => 0.0,
        }
    }

    /// Per-coordinate derivative of `r2`; 0 at the origin.
    fn r2_grad_at(&self, x: f64) -> f64 {
        let (b, lam) = (self.beta, self.lambda);
        let a = x.abs();
        match self.kind {
            RegKind::Lsp => lam * sign(x) * (1.0 / b - 1.0 / (b + a)),
            RegKind::Tl1 => {
                lam * sign(x) * (b + 1.0) * (a * a + 2.0 * b * a) / (b * (b + a) * (b + a))
            }
            _ => 0.0,
        }
    }

    /// Value and gradient of the smooth convex part `r2` of the DC split.
    /// Only LSP and TL1 have one.
    pub fn r2_value_grad(&self, x: &DenseVector) -> Result<(f64, DenseVector), ProblemError> {
        if !matches!(self.kind, RegKind::Lsp | RegKind::Tl1) {
            return Err(ProblemError::R2Undefined(self.kind));
        }
        let mut grad = DenseVector::zeros(x.len());
        let mut value = 0.0;
        for (j, &xj) in x.iter().enumerate() {
            value += self.r2_value_at(xj);
            grad[j] = self.r2_grad_at(xj);
        }
        Ok((value, grad))
    }

    /// `r2(x)`, taken as 0 for penalties without a smooth part.
    pub fn r2_value(&self, x: &DenseVector) -> f64 {
        if !self.has_r2() && self.lambda == 0.0 {
            return 0.0;
        }
        x.iter().map(|&xj| self.r2_value_at(xj)).sum()
    }
}

/// Derived constants for the composite problem: the smoothness bound `L`
/// of each `f_i`, the weak-convexity modulus `mu`, and the L1 coefficient
/// of `psi`. `L` is the worst-case bound `mu + max_i ||a_i||^2`, valid for
/// both supported losses.
pub fn derive_constants(data: &Dataset, _loss: LossKind, reg: &Regularizer) -> (f64, f64, f64) {
    let mu = reg.mu();
    let ell1_scale = reg.ell1_scale();
    let l = mu + max_row_norm_sq(data);
    (l, mu, ell1_scale)
}

/// The composite finite-sum problem with its derived constants. Immutable
/// and freely shareable; every operation is a pure function of its inputs.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    data: Dataset,
    loss: LossKind,
    reg: Regularizer,
    l: f64,
    mu: f64,
    ell1_scale: f64,
}

impl CompositeProblem {
    pub fn new(data: Dataset, loss: LossKind, reg: Regularizer) -> Result<Self, ProblemError> {
        if loss == LossKind::SquaredHinge {
            for (i, &b) in data.labels().iter().enumerate() {
                if b != 1.0 && b != -1.0 {
                    return Err(ProblemError::NonSignLabel { index: i, value: b });
                }
            }
        }
        let (l, mu, ell1_scale) = derive_constants(&data, loss, &reg);
        Ok(Self {
            data,
            loss,
            reg,
            l,
            mu,
            ell1_scale,
        })
    }

    /// Raise the weak-convexity modulus to at least `floor`, recomputing
    /// `L = mu + max ||a_i||^2`. This is how convex instances (`mu = 0`)
    /// opt in to the stagewise solver, which needs `mu > 0`.
    pub fn with_mu_floor(mut self, floor: f64) -> Self {
        if floor > self.mu {
            self.mu = floor;
            self.l = self.mu + max_row_norm_sq(&self.data);
        }
        self
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn reg(&self) -> &Regularizer {
        &self.reg
    }

    /// Smoothness bound of each `f_i`.
    pub fn smoothness(&self) -> f64 {
        self.l
    }

    /// Weak-convexity modulus of each `f_i`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Coefficient of `||x||_1` in `psi`.
    pub fn ell1_scale(&self) -> f64 {
        self.ell1_scale
    }

    /// Value and gradient of the data loss of component `i`, with the
    /// gradient materialized densely (its support is the row's support).
    pub fn loss_value_grad(&self, i: usize, x: &DenseVector) -> (f64, DenseVector) {
        let mut grad = DenseVector::zeros(x.len());
        let value = self.loss_value_grad_into(i, x, &mut grad);
        (value, grad)
    }

    fn loss_value_grad_into(&self, i: usize, x: &DenseVector, grad: &mut DenseVector) -> f64 {
        let row = self.data.row(i);
        let b = self.data.label(i);
        let ax = row.dot(x);
        match self.loss {
            LossKind::SquaredHinge => {
                let margin = (1.0 - b * ax).max(0.0);
                if margin > 0.0 {
                    row.add_scaled_into(-b * margin, grad);
                }
                0.5 * margin * margin
            }
            LossKind::LeastSquares => {
                let resid = ax - b;
                row.add_scaled_into(resid, grad);
                0.5 * resid * resid
            }
        }
    }

    pub fn loss_value(&self, i: usize, x: &DenseVector) -> f64 {
        let row = self.data.row(i);
        let b = self.data.label(i);
        let ax = row.dot(x);
        match self.loss {
            LossKind::SquaredHinge => {
                let margin = (1.0 - b * ax).max(0.0);
                0.5 * margin * margin
            }
            LossKind::LeastSquares => {
                let resid = ax - b;
                0.5 * resid * resid
            }
        }
    }

    /// `grad f_i(x) = grad loss_i(x) - grad r2(x)`. One call counts as one
    /// stochastic gradient evaluation in the accounting.
    pub fn f_i_grad(&self, i: usize, x: &DenseVector) -> DenseVector {
        let mut grad = DenseVector::zeros(x.len());
        self.loss_value_grad_into(i, x, &mut grad);
        if self.reg.has_r2() {
            for (j, g) in grad.as_mut_slice().iter_mut().enumerate() {
                *g -= self.reg.r2_grad_at(x[j]);
            }
        }
        grad
    }

    /// `f_i(x) = loss_i(x) - r2(x)`.
    pub fn f_i_value(&self, i: usize, x: &DenseVector) -> f64 {
        self.loss_value(i, x) - self.reg.r2_value(x)
    }

    /// The smooth part `(1/n) sum_i f_i(x)` of the objective.
    pub fn smooth_part_value(&self, x: &DenseVector) -> f64 {
        let n = self.n();
        let mean_loss: f64 = (0..n).map(|i| self.loss_value(i, x)).sum::<f64>() / n as f64;
        mean_loss - self.reg.r2_value(x)
    }

    /// Full gradient of the smooth part, `(1/n) sum_i grad f_i(x)`.
    /// Counts as n stochastic gradient evaluations wherever it is charged.
    pub fn smooth_part_grad(&self, x: &DenseVector) -> DenseVector {
        let n = self.n();
        let mut grad = DenseVector::zeros(x.len());
        for i in 0..n {
            self.loss_value_grad_into(i, x, &mut grad);
        }
        grad.scale(1.0 / n as f64);
        if self.reg.has_r2() {
            for (j, g) in grad.as_mut_slice().iter_mut().enumerate() {
                *g -= self.reg.r2_grad_at(x[j]);
            }
        }
        grad
    }

    /// `phi(x) = (1/n) sum_i [loss_i(x) - r2(x)] + ell1_scale * ||x||_1`,
    /// algebraically equal to `(1/n) sum_i loss_i(x) + lambda * R(x)`.
    pub fn objective(&self, x: &DenseVector) -> f64 {
        self.smooth_part_value(x) + self.ell1_scale * x.l1_norm()
    }
}

/// Exact minimizer of
///
/// ```text
/// (1/2 eta) ||z - center||^2 + <g, z> + (sigma_psi/2) ||z - anchor||^2
///   + tau ||z||_1
/// ```
///
/// computed coordinate-wise by soft thresholding. This is the prox step of
/// the stage-regularized composite part: the quadratic around `anchor`
/// carries the strong convexity, `tau` is the L1 coefficient.
pub fn prox_shifted_l1(
    center: &DenseVector,
    g: &DenseVector,
    eta: f64,
    sigma_psi: f64,
    anchor: &DenseVector,
    tau: f64,
) -> Result<DenseVector, ProblemError> {
    if !(eta > 0.0) {
        return Err(ProblemError::BadProxStep(eta));
    }
    let d = center.len();
    if g.len() != d || anchor.len() != d {
        return Err(ProblemError::DimensionMismatch(format!(
            "center {}, g {}, anchor {}",
            d,
            g.len(),
            anchor.len()
        )));
    }
    let denom = 1.0 / eta + sigma_psi;
    let thresh = tau / denom;
    let mut out = DenseVector::zeros(d);
    for j in 0..d {
        let v = (center[j] / eta - g[j] + sigma_psi * anchor[j]) / denom;
        out[j] = soft_threshold(v, thresh);
    }
    Ok(out)
}
