use std::collections::VecDeque;
use std::fmt;

use super::{NetworkKind, NetworkModel, RoutingMatrix, ServiceRate};
use crate::scalar::Scalar;

/// Absolute tolerance on probability row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// A violated structural invariant. Node indices are 0-based; `Display` renders them 1-based.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    ProbabilityOutOfRange {
        from: usize,
        to: usize,
        value: f64,
    },
    SelfLoop {
        node: usize,
        value: f64,
    },
    RowSumExceedsOne {
        node: usize,
        sum: f64,
    },
    ExitMismatch {
        node: usize,
        given: f64,
        derived: f64,
    },
    NonPositiveServiceRate {
        node: usize,
        level: usize,
        value: f64,
    },
    EmptyRateTable {
        node: usize,
    },
    NegativeArrivalRate {
        node: usize,
        value: f64,
    },
    NoExogenousArrivals,
    AbsorbingSubset {
        nodes: Vec<usize>,
    },
    UnreachableNodes {
        nodes: Vec<usize>,
    },
    ZeroPopulation,
    ClosedWithExit {
        node: usize,
        exit: f64,
    },
    ReducibleRouting,
}

fn one_based(nodes: &[usize]) -> String {
    let items: Vec<String> = nodes.iter().map(|n| (n + 1).to_string()).collect();
    format!("{{{}}}", items.join(","))
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            ProbabilityOutOfRange { from, to, value } => {
                write!(
                    f,
                    "p({},{}) = {value} is not a probability",
                    from + 1,
                    to + 1
                )
            }
            SelfLoop { node, value } => {
                write!(
                    f,
                    "self-loop p({n},{n}) = {value}; immediate return is not allowed",
                    n = node + 1
                )
            }
            RowSumExceedsOne { node, sum } => write!(f, "row {} sums to {sum} > 1", node + 1),
            ExitMismatch {
                node,
                given,
                derived,
            } => write!(
                f,
                "exit({}) = {given} disagrees with 1 - row sum = {derived}",
                node + 1
            ),
            NonPositiveServiceRate { node, level, value } => {
                write!(f, "mu_{}({level}) = {value} must be positive", node + 1)
            }
            EmptyRateTable { node } => write!(f, "service table of node {} is empty", node + 1),
            NegativeArrivalRate { node, value } => {
                write!(
                    f,
                    "arrival rate nu_{} = {value} must be non-negative",
                    node + 1
                )
            }
            NoExogenousArrivals => write!(f, "open network has no exogenous arrivals"),
            AbsorbingSubset { nodes } => {
                write!(
                    f,
                    "absorbing subset {}: no path to the exterior",
                    one_based(nodes)
                )
            }
            UnreachableNodes { nodes } => {
                write!(
                    f,
                    "nodes {} are never reached by exogenous arrivals",
                    one_based(nodes)
                )
            }
            ZeroPopulation => write!(f, "closed network population must be at least 1"),
            ClosedWithExit { node, exit } => {
                write!(
                    f,
                    "closed network node {} has exit probability {exit}",
                    node + 1
                )
            }
            ReducibleRouting => write!(f, "routing chain is not irreducible"),
        }
    }
}

/// Violations make a model invalid; warnings are informational.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// Marks node `j` iff a positive-probability path from `j` reaches a node with `exit > 0`.
pub fn reachable_exit<S: Scalar>(routing: &RoutingMatrix<S>) -> Vec<bool> {
    let n = routing.size();
    let tol = S::tol(ROW_SUM_TOLERANCE);
    let seeds: Vec<usize> = (0..n).filter(|&j| routing.exit(j) > tol).collect();
    reverse_closure(routing, &seeds)
}

fn forward_closure<S: Scalar>(routing: &RoutingMatrix<S>, seeds: &[usize]) -> Vec<bool> {
    let mut seen = vec![false; routing.size()];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &s in seeds {
        if !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(j) = queue.pop_front() {
        for k in routing.successors(j) {
            if !seen[k] {
                seen[k] = true;
                queue.push_back(k);
            }
        }
    }
    seen
}

fn reverse_closure<S: Scalar>(routing: &RoutingMatrix<S>, seeds: &[usize]) -> Vec<bool> {
    let n = routing.size();
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &s in seeds {
        if !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(k) = queue.pop_front() {
        for j in 0..n {
            if !seen[j] && routing.p(j, k) > S::zero() {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen
}

fn strongly_connected<S: Scalar>(routing: &RoutingMatrix<S>) -> bool {
    forward_closure(routing, &[0]).into_iter().all(|x| x)
        && reverse_closure(routing, &[0]).into_iter().all(|x| x)
}

/// Checks every structural invariant of the model and reports all violations.
pub fn validate<S: Scalar>(model: &NetworkModel<S>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let routing = model.routing();
    let j_count = routing.size();
    let tol = S::tol(ROW_SUM_TOLERANCE);
    let v = &mut report.violations;

    for j in 0..j_count {
        for k in 0..j_count {
            let p = routing.p(j, k);
            if !(p >= S::zero() && p <= S::one()) {
                v.push(Violation::ProbabilityOutOfRange {
                    from: j,
                    to: k,
                    value: p.as_f64(),
                });
            }
        }
        if routing.p(j, j) != S::zero() {
            v.push(Violation::SelfLoop {
                node: j,
                value: routing.p(j, j).as_f64(),
            });
        }
        let sum = routing.row_sum(j);
        if sum > S::one() + tol {
            v.push(Violation::RowSumExceedsOne {
                node: j,
                sum: sum.as_f64(),
            });
        }
        let derived = S::one() - sum;
        if !((routing.exit(j) - derived).abs() <= tol) {
            v.push(Violation::ExitMismatch {
                node: j,
                given: routing.exit(j).as_f64(),
                derived: derived.as_f64(),
            });
        }
    }

    for (j, service) in model.service().iter().enumerate() {
        match service {
            ServiceRate::Constant(mu) => {
                if !(*mu > S::zero() && mu.is_finite()) {
                    v.push(Violation::NonPositiveServiceRate {
                        node: j,
                        level: 1,
                        value: mu.as_f64(),
                    });
                }
            }
            ServiceRate::Table(rates) if rates.is_empty() => {
                v.push(Violation::EmptyRateTable { node: j })
            }
            ServiceRate::Table(rates) => {
                for (i, mu) in rates.iter().enumerate() {
                    if !(*mu > S::zero() && mu.is_finite()) {
                        v.push(Violation::NonPositiveServiceRate {
                            node: j,
                            level: i + 1,
                            value: mu.as_f64(),
                        });
                    }
                }
            }
        }
    }

    match model.kind() {
        NetworkKind::Open { arrivals } => {
            for (j, nu) in arrivals.iter().enumerate() {
                if !(*nu >= S::zero() && nu.is_finite()) {
                    v.push(Violation::NegativeArrivalRate {
                        node: j,
                        value: nu.as_f64(),
                    });
                }
            }
            let sources: Vec<usize> = (0..j_count).filter(|&j| arrivals[j] > S::zero()).collect();
            if sources.is_empty() {
                v.push(Violation::NoExogenousArrivals);
            } else {
                let reached = forward_closure(routing, &sources);
                let unreached: Vec<usize> = (0..j_count).filter(|&j| !reached[j]).collect();
                if !unreached.is_empty() {
                    v.push(Violation::UnreachableNodes { nodes: unreached });
                }
            }
            let exits = reachable_exit(routing);
            let trapped: Vec<usize> = (0..j_count).filter(|&j| !exits[j]).collect();
            if !trapped.is_empty() {
                v.push(Violation::AbsorbingSubset { nodes: trapped });
            }
            if !strongly_connected(routing) {
                report.warnings.push(Violation::ReducibleRouting);
            }
        }
        NetworkKind::Closed { population } => {
            if *population == 0 {
                v.push(Violation::ZeroPopulation);
            }
            for j in 0..j_count {
                if routing.exit(j).abs() > tol {
                    v.push(Violation::ClosedWithExit {
                        node: j,
                        exit: routing.exit(j).as_f64(),
                    });
                }
            }
            if !strongly_connected(routing) {
                v.push(Violation::ReducibleRouting);
            }
        }
    }
    report
}
