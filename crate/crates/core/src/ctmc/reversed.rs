use super::generator::Generator;
use super::space::{Operator, StateVector};
use crate::error::{Error, Result};
use crate::model::NetworkModel;
use crate::scalar::Scalar;
use crate::traffic::TrafficSolution;

/// Time reversal `q'(m, n) = pi(n) q(n, m) / pi(m)` of a stationary generator.
pub fn reversed_generator<S: Scalar>(q: &Generator<S>, pi: &[S]) -> Result<Generator<S>> {
    assert_eq!(pi.len(), q.size(), "distribution length");
    if let Some(i) = pi.iter().position(|p| !(*p > S::zero())) {
        return Err(Error::ZeroProbabilityState(i));
    }
    let triplets = q
        .transitions()
        .map(|(n, m, rate)| (m, n, pi[n] * rate / pi[m]))
        .collect();
    Ok(Generator::from_triplets(q.size(), triplets))
}

/// One transition of the reversed process out of a given state.
#[derive(Clone, Debug, PartialEq)]
pub struct ReversedRate<S> {
    pub op: Operator,
    pub target: StateVector,
    pub rate: S,
}

/// Reversed-process rates out of `n` from the closed-form expressions:
///
/// - `q'(n, T_jk n) = alpha_k p(k,j) mu_j(n_j) / alpha_j`
/// - `q'(n, T_j. n) = nu_j mu_j(n_j) / alpha_j`
/// - `q'(n, T_.k n) = alpha_k p(k)`
///
/// Closed networks only have the transfer terms. Every defined operator is listed,
/// including those with rate zero.
pub fn reversed_rates_formula<S: Scalar>(
    model: &NetworkModel<S>,
    traffic: &TrafficSolution<S>,
    n: &StateVector,
) -> Vec<ReversedRate<S>> {
    let routing = model.routing();
    let alpha = &traffic.alpha;
    let j_count = model.nodes();
    let mut out = Vec::new();
    let mut push = |op: Operator, rate: S| {
        if let Some(target) = n.apply(op) {
            out.push(ReversedRate { op, target, rate });
        }
    };
    for j in 0..j_count {
        if n[j] == 0 {
            continue;
        }
        let mu = model.mu(j, n[j]);
        for k in (0..j_count).filter(|&k| k != j) {
            push(
                Operator::Transfer { from: j, to: k },
                alpha[k] * routing.p(k, j) * mu / alpha[j],
            );
        }
        if let Some(nu) = model.arrivals() {
            push(Operator::Departure(j), nu[j] * mu / alpha[j]);
        }
    }
    if model.is_open() {
        for k in 0..j_count {
            push(Operator::Arrival(k), alpha[k] * routing.exit(k));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmc::{build_generator, solve_stationary, StateSpace};
    use crate::model::ServiceRate;
    use crate::traffic::solve_traffic;

    fn tandem() -> NetworkModel<f64> {
        NetworkModel::open(
            vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            vec![ServiceRate::Constant(2.0), ServiceRate::Constant(4.0)],
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    fn rate_of(rates: &[ReversedRate<f64>], op: Operator) -> f64 {
        rates.iter().find(|r| r.op == op).map(|r| r.rate).unwrap()
    }

    #[test]
    fn birth_death_chain_is_reversible() {
        let m = NetworkModel::open(vec![vec![0.0]], vec![ServiceRate::Constant(2.0)], vec![1.0])
            .unwrap();
        let space = StateSpace::open_uniform(1, 30).unwrap();
        // GTH keeps relative accuracy even where pi ~ 1e-9
        let q: Generator<f64> = build_generator(&m, &space).unwrap();
        let pi = solve_stationary(&q).unwrap();
        let r = reversed_generator(&q, &pi).unwrap();
        for (i, j, v) in q.transitions() {
            assert!((r.get(i, j) - v).abs() < 1e-12);
        }
        assert!(r.max_row_sum() < 1e-12);
    }

    #[test]
    fn tandem_formula_values() {
        let m = tandem();
        let t = solve_traffic(&m).unwrap();
        let rates = reversed_rates_formula(&m, &t, &StateVector(vec![1, 1]));
        assert_eq!(rate_of(&rates, Operator::Departure(1)), 0.0);
        assert_eq!(rate_of(&rates, Operator::Arrival(0)), 0.0);
        assert_eq!(rate_of(&rates, Operator::Arrival(1)), 1.0);
        let back = rates
            .iter()
            .find(|r| r.op == (Operator::Transfer { from: 1, to: 0 }))
            .unwrap();
        assert_eq!(back.target, StateVector(vec![2, 0]));
        assert!((back.rate - 4.0).abs() < 1e-14);
    }

    #[test]
    fn reversed_exogenous_arrivals_are_exit_flows() {
        let m = tandem();
        let space = StateSpace::open_uniform(2, 40).unwrap();
        let q = build_generator(&m, &space).unwrap();
        let pi = solve_stationary(&q).unwrap();
        let r = reversed_generator(&q, &pi).unwrap();
        let i = space.index_of(&[3, 2]).unwrap();
        let j = space.index_of(&[3, 3]).unwrap();
        // alpha_2 p(2) = 1
        assert!((r.get(i, j) - 1.0).abs() < 1e-6);
        assert!(r.max_row_sum() < 1e-12);
        // the reversed chain has the same total exit rate as the forward chain
        for s in 0..q.size() {
            assert!((r.diag(s) - q.diag(s)).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_probability_state_is_rejected() {
        let q = Generator::from_triplets(2, vec![(0, 1, 1.0), (1, 0, 1.0)]);
        assert!(matches!(
            reversed_generator(&q, &[1.0, 0.0]),
            Err(Error::ZeroProbabilityState(1))
        ));
    }
}
