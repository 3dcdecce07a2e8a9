//! Exact or truncated generator solves used by `analyze --oracle` and `verify`.

use qnet::ctmc::{build_generator, global_balance_residual, solve_stationary, StateSpace};
use qnet::productform::{OpenProductForm, ProductFormDistribution};
use qnet::{Generator, Network};
use serde::Serialize;

use crate::common::{check_guard, CmdResult, DENSE_GUARD};

/// Truncation tail mass used when no cap is given.
pub const DEFAULT_TAIL_MASS: f64 = 1e-8;

pub struct Oracle {
    pub space: StateSpace,
    pub q: Generator,
    pub pi: Vec<f64>,
}

/// State space for the oracle: the population simplex, or a box with per-node caps.
pub fn oracle_space(
    model: &Network,
    open_pf: Option<&OpenProductForm<f64>>,
    cap: Option<usize>,
) -> CmdResult<StateSpace> {
    match model.population() {
        Some(pop) => {
            check_guard(StateSpace::simplex_size(model.nodes(), pop), DENSE_GUARD)?;
            Ok(StateSpace::closed_simplex(model.nodes(), pop)?)
        }
        None => {
            let caps = match (cap, open_pf) {
                (Some(c), _) => vec![c; model.nodes()],
                (None, Some(pf)) => pf.caps_for_tail_mass(DEFAULT_TAIL_MASS),
                (None, None) => {
                    return Err(crate::common::Failure::new(
                        crate::common::exit::MALFORMED,
                        "an explicit --cap is needed when the product form is unavailable",
                    ))
                }
            };
            check_guard(StateSpace::box_size(&caps), DENSE_GUARD)?;
            Ok(StateSpace::open_truncated(caps)?)
        }
    }
}

pub fn solve(model: &Network, space: StateSpace) -> CmdResult<Oracle> {
    let q = build_generator(model, &space)?;
    let pi = solve_stationary(&q)?;
    Ok(Oracle { space, q, pi })
}

#[derive(Serialize)]
pub struct OracleComparison {
    pub states: usize,
    pub caps: Option<Vec<usize>>,
    pub oracle_balance_residual: f64,
    /// `||pi Q||_inf` of the product form restricted to the state space.
    pub product_form_balance_residual: f64,
    pub max_abs_difference: f64,
    /// Includes the product-form mass outside a truncation box.
    pub tv_distance: f64,
    pub product_form_mass_outside: f64,
}

/// Product form restricted to the oracle's state space (unnormalized).
pub fn restricted(dist: &ProductFormDistribution<f64>, space: &StateSpace) -> Vec<f64> {
    space.states().iter().map(|n| dist.prob(n)).collect()
}

pub fn compare(oracle: &Oracle, dist: &ProductFormDistribution<f64>) -> OracleComparison {
    let pf = restricted(dist, &oracle.space);
    let inside: f64 = pf.iter().sum();
    let outside = (1.0 - inside).max(0.0);
    let diff: Vec<f64> = pf
        .iter()
        .zip(&oracle.pi)
        .map(|(a, b)| (a - b).abs())
        .collect();
    let caps = match oracle.space.kind() {
        qnet::ctmc::SpaceKind::OpenTruncated { caps } => Some(caps.clone()),
        qnet::ctmc::SpaceKind::ClosedSimplex { .. } => None,
    };
    OracleComparison {
        states: oracle.space.len(),
        caps,
        oracle_balance_residual: global_balance_residual(&oracle.q, &oracle.pi),
        product_form_balance_residual: global_balance_residual(&oracle.q, &pf),
        max_abs_difference: diff.iter().copied().fold(0.0, f64::max),
        tv_distance: 0.5 * (diff.iter().sum::<f64>() + outside),
        product_form_mass_outside: outside,
    }
}
