//! Brute-force verification oracles used by the test suites.
//!
//! These are deliberately naive: central differences, grid search, and a
//! direct dense solve. They share no gradient or prox code with the
//! solvers they check, and they only accept desk-scale inputs
//! (d <= 50, n <= 500).

use thiserror::Error;

use crate::data::Dataset;
use crate::problem::DenseVector;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("singular system in dense solve (pivot {0:e})")]
    SingularSystem(f64),
}

const MAX_DIM: usize = 50;
const MAX_ROWS: usize = 500;

/// Central-difference gradient `(f(x + h e_j) - f(x - h e_j)) / 2h` per
/// coordinate.
pub fn finite_diff_grad(f: impl Fn(&DenseVector) -> f64, x: &DenseVector, h: f64) -> DenseVector {
    assert!(h > 0.0, "step must be positive");
    assert!(x.len() <= MAX_DIM, "oracle accepts d <= {MAX_DIM}");
    let mut grad = DenseVector::zeros(x.len());
    let mut probe = x.clone();
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let up = f(&probe);
        probe[j] = x[j] - h;
        let down = f(&probe);
        probe[j] = x[j];
        grad[j] = (up - down) / (2.0 * h);
    }
    grad
}

/// Argmin over a uniform grid of the scalar objective
///
/// ```text
/// (1/2 eta)(z - center)^2 + g z + (sigma_psi/2)(z - anchor)^2 + tau |z|
/// ```
///
/// Used to cross-check the closed-form shifted-L1 prox.
#[allow(clippy::too_many_arguments)]
pub fn grid_prox_1d(
    center: f64,
    g: f64,
    eta: f64,
    sigma_psi: f64,
    anchor: f64,
    tau: f64,
    lo: f64,
    hi: f64,
    step: f64,
) -> f64 {
    assert!(lo < hi && step > 0.0);
    let obj = |z: f64| {
        (z - center) * (z - center) / (2.0 * eta)
            + g * z
            + 0.5 * sigma_psi * (z - anchor) * (z - anchor)
            + tau * z.abs()
    };
    let steps = ((hi - lo) / step).ceil() as usize;
    let mut best = lo;
    let mut best_val = obj(lo);
    for k in 1..=steps {
        let z = lo + k as f64 * step;
        let v = obj(z);
        if v < best_val {
            best_val = v;
            best = z;
        }
    }
    // 0 is the kink; make sure the grid does not step over it.
    if obj(0.0) < best_val {
        best = 0.0;
    }
    best
}

/// Exact minimizer of `1/2 ||Ax - b||^2 + (mu_reg/2) ||x||^2` where the
/// rows of `A` and the vector `b` come from the dataset (b = labels).
/// Solves the normal equations `(A^T A + mu_reg I) x = A^T b` by Gaussian
/// elimination with partial pivoting.
pub fn exact_quadratic_min(data: &Dataset, mu_reg: f64) -> Result<DenseVector, OracleError> {
    let (n, d) = (data.n(), data.dim());
    assert!(d <= MAX_DIM, "oracle accepts d <= {MAX_DIM}");
    assert!(n <= MAX_ROWS, "oracle accepts n <= {MAX_ROWS}");
    let mut ata = vec![vec![0.0f64; d]; d];
    let mut atb = vec![0.0f64; d];
    for i in 0..n {
        let row = data.row(i);
        let b = data.label(i);
        for (j, vj) in row.iter() {
            atb[j] += vj * b;
            for (k, vk) in row.iter() {
                ata[j][k] += vj * vk;
            }
        }
    }
    for (j, row) in ata.iter_mut().enumerate() {
        row[j] += mu_reg;
    }
    solve_dense(ata, atb).map(DenseVector::from)
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, OracleError> {
    let d = b.len();
    for col in 0..d {
        let (pivot_row, pivot) = (col..d)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if pivot < 1e-12 {
            return Err(OracleError::SingularSystem(pivot));
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        let (upper, lower) = a.split_at_mut(col + 1);
        let lead = &upper[col];
        for (offset, row) in lower.iter_mut().enumerate() {
            let factor = row[col] / lead[col];
            if factor == 0.0 {
                continue;
            }
            for (c, entry) in row.iter_mut().enumerate().skip(col) {
                *entry -= factor * lead[c];
            }
            b[col + 1 + offset] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; d];
    for col in (0..d).rev() {
        let mut acc = b[col];
        for c in col + 1..d {
            acc -= a[col][c] * x[c];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SparseRow;
    use crate::problem::Regularizer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn finite_diff_is_exact_on_quadratics() {
        let x = DenseVector::from(vec![1.0, 2.0]);
        let g = finite_diff_grad(|v| 0.5 * v.norm_sq(), &x, 1e-5);
        assert!((g[0] - 1.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn finite_diff_matches_lsp_hand_derivative() {
        let reg = Regularizer::lsp(1.0, 1.0).unwrap();
        let x = DenseVector::from(vec![1.0]);
        let g = finite_diff_grad(|v| reg.r2_value_grad(v).unwrap().0, &x, 1e-5);
        assert!((g[0] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn finite_diff_cross_checks_tl1() {
        let reg = Regularizer::tl1(1.3, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x = DenseVector::from(
                (0..4)
                    .map(|_| {
                        let v: f64 = rng.random_range(-2.0..2.0);
                        if v.abs() < 1e-2 {
                            v + 0.05
                        } else {
                            v
                        }
                    })
                    .collect::<Vec<_>>(),
            );
            let (_, g) = reg.r2_value_grad(&x).unwrap();
            let fd = finite_diff_grad(|v| reg.r2_value_grad(v).unwrap().0, &x, 1e-5);
            assert!(g.dist(&fd) <= 1e-6 * g.norm().max(1.0));
        }
    }

    #[test]
    fn grid_prox_known_cases() {
        // the (0.75, 0) instance of the shifted prox
        let z = grid_prox_1d(2.0, 0.0, 1.0, 1.0, 0.0, 0.5, -4.0, 4.0, 1e-4);
        assert!((z - 0.75).abs() <= 1e-4);
        // tau=0, sigma=0: plain gradient step center - eta*g
        let z = grid_prox_1d(1.0, 0.5, 0.4, 0.0, 0.0, 0.0, -4.0, 4.0, 1e-4);
        assert!((z - 0.8).abs() <= 1e-4);
        // huge tau pins the origin
        let z = grid_prox_1d(1.0, 0.0, 1.0, 0.0, 0.0, 50.0, -4.0, 4.0, 1e-4);
        assert_eq!(z, 0.0);
    }

    fn identity_dataset(b: &[f64]) -> Dataset {
        let rows = (0..b.len())
            .map(|j| SparseRow::new(vec![j], vec![1.0]).unwrap())
            .collect();
        Dataset::new(rows, b.to_vec(), b.len()).unwrap()
    }

    #[test]
    fn quadratic_min_identity_design() {
        let ds = identity_dataset(&[1.0, 1.0]);
        let x = exact_quadratic_min(&ds, 0.0).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        // 1/2||x-b||^2 + 1/2||x||^2 -> x = b/2
        let x = exact_quadratic_min(&ds, 1.0).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn quadratic_min_residual_is_tiny() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 5;
        let rows: Vec<SparseRow> = (0..8)
            .map(|_| {
                let vals: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                SparseRow::new((0..d).collect(), vals).unwrap()
            })
            .collect();
        let b: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ds = Dataset::new(rows, b, d).unwrap();
        let mu_reg = 0.3;
        let x = exact_quadratic_min(&ds, mu_reg).unwrap();
        // residual of the normal equations
        let mut resid = vec![0.0; d];
        for j in 0..d {
            resid[j] = mu_reg * x[j];
        }
        for i in 0..ds.n() {
            let row = ds.row(i);
            let ax = row.dot(&x);
            for (j, v) in row.iter() {
                resid[j] += v * (ax - ds.label(i));
            }
        }
        let norm: f64 = resid.iter().map(|r| r * r).sum::<f64>().sqrt();
        assert!(norm <= 1e-10, "residual {norm}");
    }

    #[test]
    fn singular_system_is_reported() {
        // two identical rows, no regularization: rank 1 in d=2
        let rows = vec![
            SparseRow::new(vec![0, 1], vec![1.0, 1.0]).unwrap(),
            SparseRow::new(vec![0, 1], vec![1.0, 1.0]).unwrap(),
        ];
        let ds = Dataset::new(rows, vec![1.0, 1.0], 2).unwrap();
        assert!(matches!(
            exact_quadratic_min(&ds, 0.0),
            Err(OracleError::SingularSystem(_))
        ));
    }
}
