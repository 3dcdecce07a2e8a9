//! Product-form stationary distributions of open and closed networks.

use crate::ctmc::{StateSpace, StateVector};
use crate::error::{Error, Result};
use crate::model::{NetworkModel, ServiceRate};
use crate::normconst::{NormalizingConstant, ENUMERATION_LIMIT};
use crate::scalar::{CompensatedSum, Scalar};
use crate::traffic::TrafficSolution;

/// Series terms are summed until they fall below this fraction of the running sum.
const SERIES_RELATIVE_STOP: f64 = 1e-16;
/// Consecutive non-decreasing terms after which the series is declared divergent.
const SERIES_DIVERGENCE_RUN: usize = 50;
const SERIES_MAX_TERMS: usize = 100_000_000;

/// Stationary law `pi_j(n) = b_j alpha_j^n / prod_{r<=n} mu_j(r)` of one node of an open network.
///
/// Beyond the service table the law is geometric with ratio `alpha_j / mu_j(tail)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeMarginal<S> {
    pub node: usize,
    pub alpha: S,
    /// Reciprocal of `sum_i alpha^i / prod_{r<=i} mu(r)`, so that the pmf sums to one.
    pub b: S,
    head: Vec<S>,
    tail_ratio: S,
    service: ServiceRate<S>,
}

impl<S: Scalar> NodeMarginal<S> {
    fn new(node: usize, alpha: S, service: &ServiceRate<S>) -> Result<Self> {
        let tail_ratio = alpha / service.tail_rate();
        let unstable = || Error::UnstableNode {
            node,
            load: tail_ratio.as_f64(),
        };
        if !(tail_ratio < S::one()) {
            return Err(unstable());
        }
        let k = service.table_len() - 1;
        let b = match service {
            ServiceRate::Constant(_) => S::one() - tail_ratio,
            ServiceRate::Table(_) => S::one() / series_sum(alpha, service).ok_or_else(unstable)?,
        };
        let mut head = Vec::with_capacity(k + 1);
        head.push(b);
        for n in 1..=k {
            let prev = head[n - 1];
            head.push(prev * alpha / service.rate(n));
        }
        Ok(Self {
            node,
            alpha,
            b,
            head,
            tail_ratio,
            service: service.clone(),
        })
    }

    /// `alpha / mu(tail)`; equals `rho_j` for constant rates.
    pub fn tail_ratio(&self) -> S {
        self.tail_ratio
    }

    pub fn pmf(&self, n: usize) -> S {
        let k = self.head.len() - 1;
        if n <= k {
            self.head[n]
        } else {
            self.head[k] * self.tail_ratio.powi((n - k) as i32)
        }
    }

    /// `P[N_j > cap]`.
    pub fn tail_mass(&self, cap: usize) -> S {
        let k = self.head.len() - 1;
        let r = self.tail_ratio;
        if cap >= k {
            self.head[k] * r.powi((cap + 1 - k) as i32) / (S::one() - r)
        } else {
            let mid: S = self.head[cap + 1..k].iter().copied().sum();
            mid + self.head[k] / (S::one() - r)
        }
    }

    /// Smallest cap with `P[N_j > cap] <= eps`.
    pub fn cap_for_tail(&self, eps: S) -> usize {
        let mut cap = 0;
        while self.tail_mass(cap) > eps {
            cap += 1;
        }
        cap
    }

    pub fn mean(&self) -> S {
        let k = self.head.len() - 1;
        let r = self.tail_ratio;
        let one = S::one();
        let head: S = (0..k).map(|n| S::from_usize_lossy(n) * self.head[n]).sum();
        let kk = S::from_usize_lossy(k);
        head + self.head[k] * (kk / (one - r) + r / ((one - r) * (one - r)))
    }

    pub fn utilization(&self) -> S {
        S::one() - self.head[0]
    }

    pub fn throughput(&self) -> S {
        let k = self.head.len() - 1;
        let r = self.tail_ratio;
        let head: S = (0..=k).map(|n| self.head[n] * self.service.rate(n)).sum();
        head + self.head[k] * self.service.tail_rate() * r / (S::one() - r)
    }
}

fn series_sum<S: Scalar>(alpha: S, service: &ServiceRate<S>) -> Option<S> {
    let mut acc = CompensatedSum::new();
    acc.add(S::one());
    let mut term = S::one();
    let mut rising = 0;
    for i in 1..SERIES_MAX_TERMS {
        let next = term * alpha / service.rate(i);
        acc.add(next);
        rising = if next >= term { rising + 1 } else { 0 };
        if rising >= SERIES_DIVERGENCE_RUN || !next.is_finite() {
            return None;
        }
        term = next;
        if term < S::lit(SERIES_RELATIVE_STOP) * acc.value() {
            return Some(acc.value());
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityVerdict<S> {
    pub node: usize,
    /// `alpha_j / mu_j(tail)`.
    pub load: S,
    pub stable: bool,
}

/// Per-node convergence of the marginal series: stable iff `alpha_j / mu_j(tail) < 1`.
pub fn check_stability<S: Scalar>(
    model: &NetworkModel<S>,
    traffic: &TrafficSolution<S>,
) -> Vec<StabilityVerdict<S>> {
    model
        .service()
        .iter()
        .enumerate()
        .map(|(node, s)| {
            let load = traffic.alpha[node] / s.tail_rate();
            StabilityVerdict {
                node,
                load,
                stable: load < S::one(),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpenProductForm<S> {
    pub marginals: Vec<NodeMarginal<S>>,
}

impl<S: Scalar> OpenProductForm<S> {
    /// Joint probability, the product of the node marginals.
    pub fn prob(&self, n: &[usize]) -> S {
        self.marginals
            .iter()
            .zip(n)
            .map(|(m, &x)| m.pmf(x))
            .fold(S::one(), |a, b| a * b)
    }

    /// `rho_j = alpha_j / mu_j` for nodes with constant rates.
    pub fn rho(&self) -> Vec<Option<S>> {
        self.marginals
            .iter()
            .map(|m| m.service.constant_rate().map(|mu| m.alpha / mu))
            .collect()
    }

    /// Per-node caps whose box leaves at most `eps` of product-form mass outside.
    pub fn caps_for_tail_mass(&self, eps: S) -> Vec<usize> {
        let share = eps / S::from_usize_lossy(self.marginals.len());
        self.marginals
            .iter()
            .map(|m| m.cap_for_tail(share).max(1))
            .collect()
    }

    /// Product-form mass outside the box `n_j <= caps[j]`.
    pub fn mass_outside(&self, caps: &[usize]) -> S {
        let inside = self
            .marginals
            .iter()
            .zip(caps)
            .fold(S::one(), |acc, (m, &c)| acc * (S::one() - m.tail_mass(c)));
        S::one() - inside
    }

    /// Product form restricted to the states of `space` and renormalized.
    pub fn restricted(&self, space: &StateSpace) -> Vec<S> {
        let mut p: Vec<S> = space.states().iter().map(|n| self.prob(n)).collect();
        let total: S = p.iter().copied().sum();
        p.iter_mut().for_each(|v| *v /= total);
        p
    }
}

#[derive(Clone, Debug)]
pub struct ClosedProductForm<S> {
    pub alpha: Vec<S>,
    pub normalizing: NormalizingConstant<S>,
    pub space: StateSpace,
    pub probs: Vec<S>,
    service: Vec<ServiceRate<S>>,
}

impl<S: Scalar> ClosedProductForm<S> {
    pub fn prob(&self, n: &[usize]) -> S {
        self.space.index_of(n).map_or(S::zero(), |i| self.probs[i])
    }

    /// Marginal queue-length pmf of one node, indexed by `0..=N`.
    pub fn marginal(&self, node: usize) -> Vec<S> {
        let population = self.space.states().first().map_or(0, |s| s.total());
        let mut pmf = vec![S::zero(); population + 1];
        for (s, p) in self.space.states().iter().zip(&self.probs) {
            pmf[s[node]] += *p;
        }
        pmf
    }

    /// States ordered by decreasing probability (ties by enumeration order).
    pub fn top_states(&self, count: usize) -> Vec<(StateVector, S)> {
        let mut idx: Vec<usize> = (0..self.probs.len()).collect();
        idx.sort_by(|&a, &b| {
            self.probs[b]
                .partial_cmp(&self.probs[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        idx.into_iter()
            .take(count)
            .map(|i| (self.space.state(i).clone(), self.probs[i]))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub enum ProductFormDistribution<S> {
    Open(OpenProductForm<S>),
    Closed(ClosedProductForm<S>),
}

impl<S: Scalar> ProductFormDistribution<S> {
    pub fn prob(&self, n: &[usize]) -> S {
        match self {
            ProductFormDistribution::Open(d) => d.prob(n),
            ProductFormDistribution::Closed(d) => d.prob(n),
        }
    }
}

/// Product form of an open network.
pub fn open_stationary<S: Scalar>(
    model: &NetworkModel<S>,
    traffic: &TrafficSolution<S>,
) -> Result<OpenProductForm<S>> {
    if !model.is_open() {
        return Err(Error::NotOpen);
    }
    let marginals = model
        .service()
        .iter()
        .enumerate()
        .map(|(j, s)| NodeMarginal::new(j, traffic.alpha[j], s))
        .collect::<Result<Vec<_>>>()?;
    Ok(OpenProductForm { marginals })
}

/// Product form of a closed network on its population simplex, scaled by `B_N`.
pub fn closed_stationary<S: Scalar>(
    model: &NetworkModel<S>,
    traffic: &TrafficSolution<S>,
    normalizing: &NormalizingConstant<S>,
) -> Result<ClosedProductForm<S>> {
    let population = model.population().ok_or(Error::NotClosed)?;
    let states = StateSpace::simplex_size(model.nodes(), population);
    if states > ENUMERATION_LIMIT {
        return Err(Error::StateSpaceTooLarge {
            states,
            limit: ENUMERATION_LIMIT,
        });
    }
    let space = StateSpace::closed_simplex(model.nodes(), population)?;
    let weights: Vec<Vec<S>> = (0..model.nodes())
        .map(|j| {
            let mut w = vec![S::one(); population + 1];
            for n in 1..=population {
                w[n] = w[n - 1] * traffic.alpha[j] / model.mu(j, n);
            }
            w
        })
        .collect();
    let probs = space
        .states()
        .iter()
        .map(|n| {
            n.iter()
                .enumerate()
                .fold(normalizing.b_n, |acc, (j, &x)| acc * weights[j][x])
        })
        .collect();
    Ok(ClosedProductForm {
        alpha: traffic.alpha.clone(),
        normalizing: normalizing.clone(),
        space,
        probs,
        service: model.service().to_vec(),
    })
}

/// Absolute residuals of the per-node and exogenous partial-balance equations at one state.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialBalanceResiduals<S> {
    pub per_node: Vec<S>,
    pub exogenous: S,
}

impl<S: Scalar> PartialBalanceResiduals<S> {
    pub fn max(&self) -> S {
        self.per_node.iter().copied().fold(self.exogenous, S::max)
    }
}

/// Evaluates both sides of the partial-balance equations at `n` under the product form.
///
/// Node `j`: flow out of `n` by a service completion at `j` equals flow into `n` by an
/// arrival at `j`. Exogenous: flow out by an exogenous arrival equals flow in by a
/// departure to the exterior.
pub fn verify_partial_balance<S: Scalar>(
    model: &NetworkModel<S>,
    dist: &OpenProductForm<S>,
    n: &StateVector,
) -> Result<PartialBalanceResiduals<S>> {
    let nu = model.arrivals().ok_or(Error::NotOpen)?;
    let routing = model.routing();
    let j_count = model.nodes();
    let pi_n = dist.prob(n);
    let mut per_node = Vec::with_capacity(j_count);
    for j in 0..j_count {
        if n[j] == 0 {
            per_node.push(S::zero());
            continue;
        }
        let mu = model.mu(j, n[j]);
        let out_rate = routing.exit(j) * mu + (0..j_count).map(|k| routing.p(j, k) * mu).sum::<S>();
        let lhs = pi_n * out_rate;
        let mut rhs = CompensatedSum::new();
        let minus_j = n
            .apply(crate::ctmc::Operator::Departure(j))
            .expect("n_j > 0");
        rhs.add(dist.prob(&minus_j) * nu[j]);
        for k in (0..j_count).filter(|&k| k != j) {
            let from = n
                .apply(crate::ctmc::Operator::Transfer { from: j, to: k })
                .expect("n_j > 0");
            rhs.add(dist.prob(&from) * routing.p(k, j) * model.mu(k, from[k]));
        }
        per_node.push((lhs - rhs.value()).abs());
    }
    let lhs = pi_n * nu.iter().copied().sum::<S>();
    let mut rhs = CompensatedSum::new();
    for k in 0..j_count {
        let from = n
            .apply(crate::ctmc::Operator::Arrival(k))
            .expect("arrival always defined");
        rhs.add(dist.prob(&from) * routing.exit(k) * model.mu(k, from[k]));
    }
    Ok(PartialBalanceResiduals {
        per_node,
        exogenous: (lhs - rhs.value()).abs(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeMetrics<S> {
    /// `E[N_j]`, customers.
    pub mean_queue: S,
    /// `P[N_j > 0]`.
    pub utilization: S,
    /// Completions per unit time, `E[mu_j(N_j)]`.
    pub throughput: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerformanceMetrics<S> {
    pub nodes: Vec<NodeMetrics<S>>,
}

pub fn metrics<S: Scalar>(dist: &ProductFormDistribution<S>) -> PerformanceMetrics<S> {
    let nodes = match dist {
        ProductFormDistribution::Open(d) => d
            .marginals
            .iter()
            .map(|m| NodeMetrics {
                mean_queue: m.mean(),
                utilization: m.utilization(),
                throughput: m.throughput(),
            })
            .collect(),
        ProductFormDistribution::Closed(d) => (0..d.alpha.len())
            .map(|j| {
                let mut mean = CompensatedSum::new();
                let mut busy = CompensatedSum::new();
                let mut thr = CompensatedSum::new();
                for (s, &p) in d.space.states().iter().zip(&d.probs) {
                    mean.add(p * S::from_usize_lossy(s[j]));
                    if s[j] > 0 {
                        busy.add(p);
                        thr.add(p * d.service[j].rate(s[j]));
                    }
                }
                NodeMetrics {
                    mean_queue: mean.value(),
                    utilization: busy.value(),
                    throughput: thr.value(),
                }
            })
            .collect(),
    };
    PerformanceMetrics { nodes }
}
