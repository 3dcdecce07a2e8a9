use super::generator::Generator;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StationaryOptions {
    /// Direct elimination is used while `states * bandwidth^2` stays below this.
    pub direct_work_limit: f64,
    /// Direct elimination is used while the band storage stays below this many entries.
    pub direct_memory_limit: usize,
    /// Power-iteration stop: ∞-norm change between successive iterates.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Uniformization constant as a multiple of the largest exit rate.
    pub uniformization_factor: f64,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self {
            direct_work_limit: 2e10,
            direct_memory_limit: 40_000_000,
            tolerance: 1e-12,
            max_iterations: 2_000_000,
            uniformization_factor: 1.05,
        }
    }
}

/// Stationary distribution `pi Q = 0, sum pi = 1` with default options.
pub fn solve_stationary<S: Scalar>(q: &Generator<S>) -> Result<Vec<S>> {
    solve_stationary_with(q, &StationaryOptions::default())
}

/// Direct GTH elimination when the band fits the limits, power iteration otherwise.
pub fn solve_stationary_with<S: Scalar>(
    q: &Generator<S>,
    opts: &StationaryOptions,
) -> Result<Vec<S>> {
    let n = q.size() as f64;
    let b = q.bandwidth() as f64;
    if n * b * b <= opts.direct_work_limit && n * (2.0 * b + 1.0) <= opts.direct_memory_limit as f64
    {
        solve_stationary_dense(q)
    } else {
        solve_stationary_power(q, opts)
    }
}

/// Grassmann–Taksar–Heyman state reduction on band storage.
///
/// Only additions, multiplications, and divisions of non-negative numbers occur,
/// so every component carries a small relative error, however tiny it is.
pub fn solve_stationary_dense<S: Scalar>(q: &Generator<S>) -> Result<Vec<S>> {
    let n = q.size();
    if n == 0 {
        return Err(Error::SingularOrReducible("empty state space".into()));
    }
    let b = q.bandwidth();
    let width = 2 * b + 1;
    // a[i][j] lives at band[i * width + (j + b - i)]
    let mut band = vec![S::zero(); n * width];
    let at = |i: usize, j: usize| i * width + j + b - i;
    for (i, j, v) in q.transitions() {
        band[at(i, j)] = v;
    }
    for k in (1..n).rev() {
        let lo = k.saturating_sub(b);
        let row_k = k * width;
        let s: S = band[row_k + lo + b - k..row_k + b].iter().copied().sum();
        if !(s > S::zero()) {
            return Err(Error::SingularOrReducible(format!(
                "state {k} has no path to lower states"
            )));
        }
        for i in lo..k {
            let idx = at(i, k);
            let factor = band[idx] / s;
            band[idx] = factor;
            if factor == S::zero() {
                continue;
            }
            for j in lo..k {
                if i == j {
                    continue;
                }
                let v = band[row_k + j + b - k];
                band[at(i, j)] += factor * v;
            }
        }
    }
    let mut pi = vec![S::zero(); n];
    pi[0] = S::one();
    for k in 1..n {
        let lo = k.saturating_sub(b);
        pi[k] = (lo..k).map(|i| pi[i] * band[at(i, k)]).sum();
    }
    clean(pi)
}

/// Direct solve of `Q^T pi = 0` with the last balance equation replaced by `sum pi = 1`.
///
/// Accurate in the ∞-norm only; tiny components may lose all relative accuracy.
pub fn solve_stationary_lu<S: Scalar>(q: &Generator<S>) -> Result<Vec<S>> {
    let n = q.size();
    if n == 0 {
        return Err(Error::SingularOrReducible("empty state space".into()));
    }
    let mut a = DenseMatrix::zeros(n);
    for i in 0..n {
        a[(i, i)] = q.diag(i);
        for (j, v) in q.row(i) {
            a[(j, i)] = v;
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = S::one();
    }
    let mut rhs = vec![S::zero(); n];
    rhs[n - 1] = S::one();
    let pi = a
        .solve(rhs)
        .ok_or_else(|| Error::SingularOrReducible("balance system is singular".into()))?;
    clean(pi)
}

/// Power iteration on the uniformized chain `P = I + Q / Lambda`.
pub fn solve_stationary_power<S: Scalar>(
    q: &Generator<S>,
    opts: &StationaryOptions,
) -> Result<Vec<S>> {
    let n = q.size();
    if n == 0 {
        return Err(Error::SingularOrReducible("empty state space".into()));
    }
    let lambda = q.max_exit_rate() * S::lit(opts.uniformization_factor);
    if lambda == S::zero() {
        return if n == 1 {
            Ok(vec![S::one()])
        } else {
            Err(Error::SingularOrReducible("no transitions".into()))
        };
    }
    let tol = S::tol(opts.tolerance);
    let mut x = vec![S::one() / S::from_usize_lossy(n); n];
    for _ in 0..opts.max_iterations {
        let flow = q.left_multiply(&x);
        let mut next: Vec<S> = x.iter().zip(&flow).map(|(a, f)| *a + *f / lambda).collect();
        let total: S = next.iter().copied().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let diff = next
            .iter()
            .zip(&x)
            .fold(S::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        x = next;
        if diff < tol {
            return clean(x);
        }
    }
    Err(Error::SingularOrReducible(format!(
        "power iteration did not converge in {} iterations",
        opts.max_iterations
    )))
}

fn clean<S: Scalar>(mut pi: Vec<S>) -> Result<Vec<S>> {
    let floor = -S::tol(1e-12);
    if let Some(i) = pi.iter().position(|v| *v < floor || !v.is_finite()) {
        return Err(Error::SingularOrReducible(format!(
            "component {i} is {}; chain is reducible or ill-conditioned",
            pi[i]
        )));
    }
    pi.iter_mut().for_each(|v| *v = v.max(S::zero()));
    let total: S = pi.iter().copied().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    Ok(pi)
}

/// `||pi Q||_inf`.
pub fn global_balance_residual<S: Scalar>(q: &Generator<S>, pi: &[S]) -> S {
    q.left_multiply(pi)
        .into_iter()
        .fold(S::zero(), |m, v| m.max(v.abs()))
}
