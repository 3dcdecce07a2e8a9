//! Traffic equations: total arrival rate `alpha_j` at every node.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::{NetworkModel, RoutingMatrix};
use crate::scalar::Scalar;

/// Above this many nodes the open equations are solved by fixed-point iteration.
pub const DENSE_TRAFFIC_LIMIT: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// Absolute rates (open networks).
    Absolute,
    /// Relative visit rates scaled so that `alpha_1 = 1` (closed networks).
    ScaledFirstNodeOne,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrafficSolution<S> {
    pub alpha: Vec<S>,
    pub normalization: Normalization,
}

impl<S: Scalar> TrafficSolution<S> {
    pub fn alpha(&self, node: usize) -> S {
        self.alpha[node]
    }

    /// ∞-norm residual of the traffic equations this solution was computed for.
    pub fn residual(&self, model: &NetworkModel<S>) -> S {
        let routing = model.routing();
        let nu = model.arrivals();
        (0..model.nodes())
            .map(|j| {
                let inflow: S = (0..model.nodes())
                    .map(|k| self.alpha[k] * routing.p(k, j))
                    .sum();
                let exo = nu.map_or(S::zero(), |nu| nu[j]);
                (self.alpha[j] - exo - inflow).abs()
            })
            .fold(S::zero(), S::max)
    }

    /// Residual bound `1e-10 * max(1, ||alpha||_inf)` for the scalar type.
    pub fn residual_bound(&self) -> S {
        let norm = self.alpha.iter().fold(S::one(), |m, a| m.max(a.abs()));
        S::tol(1e-10) * norm
    }
}

/// Solves `alpha_j = nu_j + sum_k alpha_k p(k,j)` for an open network.
pub fn solve_open_traffic<S: Scalar>(model: &NetworkModel<S>) -> Result<TrafficSolution<S>> {
    let nu = model.arrivals().ok_or(Error::NotOpen)?;
    let routing = model.routing();
    let alpha = if model.nodes() <= DENSE_TRAFFIC_LIMIT {
        let j = model.nodes();
        let mut a = DenseMatrix::identity(j);
        for row in 0..j {
            for col in 0..j {
                a[(row, col)] -= routing.p(col, row);
            }
        }
        a.solve(nu.to_vec())
            .ok_or_else(|| Error::SingularSystem("I - P^T is singular".into()))?
    } else {
        fixed_point(routing, nu)?
    };
    check_positive(&alpha)?;
    Ok(TrafficSolution {
        alpha,
        normalization: Normalization::Absolute,
    })
}

fn fixed_point<S: Scalar>(routing: &RoutingMatrix<S>, nu: &[S]) -> Result<Vec<S>> {
    let j = routing.size();
    let mut alpha = nu.to_vec();
    for _ in 0..1_000_000 {
        let mut next = nu.to_vec();
        for k in 0..j {
            for (t, p) in routing.row(k).iter().enumerate() {
                next[t] += alpha[k] * *p;
            }
        }
        let scale = next.iter().fold(S::one(), |m, a| m.max(a.abs()));
        let diff = next
            .iter()
            .zip(&alpha)
            .fold(S::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        alpha = next;
        if diff <= S::tol(1e-14) * scale {
            return Ok(alpha);
        }
    }
    Err(Error::SingularSystem(
        "fixed-point iteration did not converge".into(),
    ))
}

fn check_positive<S: Scalar>(alpha: &[S]) -> Result<()> {
    match alpha.iter().position(|a| !(*a > S::zero())) {
        Some(j) => Err(Error::SingularSystem(format!(
            "non-positive traffic {} at node {}",
            alpha[j],
            j + 1
        ))),
        None => Ok(()),
    }
}

/// Relative visit rates of a closed network: the stationary vector of the routing chain with `alpha_1 = 1`.
pub fn solve_closed_traffic<S: Scalar>(model: &NetworkModel<S>) -> Result<TrafficSolution<S>> {
    if model.population().is_none() {
        return Err(Error::NotClosed);
    }
    let routing = model.routing();
    let j = model.nodes();
    // (P^T - I) alpha = 0 with the first equation replaced by alpha_1 = 1
    let mut a = DenseMatrix::zeros(j);
    for row in 1..j {
        for col in 0..j {
            a[(row, col)] = routing.p(col, row);
        }
        a[(row, row)] -= S::one();
    }
    a[(0, 0)] = S::one();
    let mut rhs = vec![S::zero(); j];
    rhs[0] = S::one();
    let alpha = a.solve(rhs).ok_or(Error::NotIrreducible)?;
    if alpha.iter().any(|x| !(*x > S::zero())) {
        return Err(Error::NotIrreducible);
    }
    Ok(TrafficSolution {
        alpha,
        normalization: Normalization::ScaledFirstNodeOne,
    })
}

/// Dispatches on the network kind.
pub fn solve_traffic<S: Scalar>(model: &NetworkModel<S>) -> Result<TrafficSolution<S>> {
    if model.is_open() {
        solve_open_traffic(model)
    } else {
        solve_closed_traffic(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ServiceRate;

    fn unit(j: usize) -> Vec<ServiceRate<f64>> {
        vec![ServiceRate::Constant(1.0); j]
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn tandem_flow_is_conserved() {
        let m = NetworkModel::open(
            vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            unit(2),
            vec![1.0, 0.0],
        )
        .unwrap();
        let t = solve_open_traffic(&m).unwrap();
        assert_close(&t.alpha, &[1.0, 1.0], 1e-14);
        assert_eq!(t.normalization, Normalization::Absolute);
    }

    #[test]
    fn feedback_loop_matches_fixed_point_oracle() {
        let m = NetworkModel::open(
            vec![vec![0.0, 1.0], vec![0.5, 0.0]],
            unit(2),
            vec![1.0, 0.0],
        )
        .unwrap();
        // oracle: iterate alpha <- nu + P^T alpha to convergence
        let mut oracle = [1.0f64, 0.0];
        for _ in 0..200 {
            oracle = [1.0 + 0.5 * oracle[1], oracle[0]];
        }
        assert_close(&oracle, &[2.0, 2.0], 1e-12);
        let t = solve_open_traffic(&m).unwrap();
        assert_close(&t.alpha, &oracle, 1e-12);
        assert!(t.residual(&m) < t.residual_bound());
        // the iterative route agrees with the dense route
        let iterative = fixed_point(m.routing(), &[1.0, 0.0]).unwrap();
        assert_close(&iterative, &t.alpha, 1e-12);
    }

    #[test]
    fn isolated_node_keeps_exogenous_rate() {
        let m = NetworkModel::open(vec![vec![0.0]], unit(1), vec![3.0]).unwrap();
        assert_close(&solve_open_traffic(&m).unwrap().alpha, &[3.0], 0.0);
    }

    #[test]
    fn closed_cycles_are_uniform() {
        let three = NetworkModel::closed(
            vec![
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![1.0, 0.0, 0.0],
            ],
            unit(3),
            2,
        )
        .unwrap();
        assert_close(
            &solve_closed_traffic(&three).unwrap().alpha,
            &[1.0, 1.0, 1.0],
            1e-14,
        );
        let two = NetworkModel::closed(vec![vec![0.0, 1.0], vec![1.0, 0.0]], unit(2), 1).unwrap();
        assert_close(
            &solve_closed_traffic(&two).unwrap().alpha,
            &[1.0, 1.0],
            1e-14,
        );
    }

    #[test]
    fn closed_star_matches_power_iteration_oracle() {
        let rows = vec![
            vec![0.0, 0.5, 0.5],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ];
        // oracle: power iteration of the lazy chain (I + P)/2, then scale so alpha_1 = 1
        let mut v = [1.0 / 3.0; 3];
        for _ in 0..2000 {
            let mut next = [0.0; 3];
            for k in 0..3 {
                next[k] += 0.5 * v[k];
                for t in 0..3 {
                    next[t] += 0.5 * v[k] * rows[k][t];
                }
            }
            v = next;
        }
        let oracle: Vec<f64> = v.iter().map(|x| x / v[0]).collect();
        assert_close(&oracle, &[1.0, 0.5, 0.5], 1e-12);
        let m = NetworkModel::closed(rows, unit(3), 2).unwrap();
        let t = solve_closed_traffic(&m).unwrap();
        assert_close(&t.alpha, &oracle, 1e-12);
        assert_eq!(t.normalization, Normalization::ScaledFirstNodeOne);
        assert!(t.residual(&m) < t.residual_bound());
    }

    #[test]
    fn reducible_closed_chain_is_rejected() {
        // two disjoint 2-cycles: stationary vector is not unique
        let rows = vec![
            vec![0.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ];
        let m = NetworkModel::closed(rows, unit(4), 2).unwrap();
        assert!(matches!(
            solve_closed_traffic(&m),
            Err(Error::NotIrreducible)
        ));
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        let closed =
            NetworkModel::closed(vec![vec![0.0, 1.0], vec![1.0, 0.0]], unit(2), 1).unwrap();
        assert!(matches!(solve_open_traffic(&closed), Err(Error::NotOpen)));
    }

    #[test]
    fn works_in_single_precision() {
        let m = NetworkModel::<f32>::open(
            vec![vec![0.0, 1.0], vec![0.5, 0.0]],
            vec![ServiceRate::Constant(1.0); 2],
            vec![1.0, 0.0],
        )
        .unwrap();
        let t = solve_open_traffic(&m).unwrap();
        assert!((t.alpha[0] - 2.0).abs() < 1e-5);
        assert!(t.residual(&m) < t.residual_bound());
    }
}
