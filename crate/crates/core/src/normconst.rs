//! Normalizing constant of closed product-form networks.
//!
//! `G = sum over {n : sum n_j = N} of prod_j rho_j^{n_j}` and `B_N = 1 / G`.
//! Four routes are provided: direct enumeration, the convolution recursion,
//! the distinct-load partial-fraction formula, and its confluent limit for
//! repeated loads.

use serde::Serialize;

use crate::ctmc::StateSpace;
use crate::error::{Error, Result};
use crate::model::{NetworkModel, ServiceRate};
use crate::scalar::{CompensatedSum, Scalar};
use crate::traffic::TrafficSolution;

/// Relative tolerance under which two loads are treated as equal.
pub const DISTINCT_TOLERANCE: f64 = 1e-8;
/// Largest simplex enumerated by default.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;
/// Relative agreement required between a closed form and the convolution result.
pub const AGREEMENT_TOLERANCE: f64 = 1e-9;

/// Relative loads `rho_j = alpha_j / mu_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadVector<S>(Vec<S>);

impl<S: Scalar> LoadVector<S> {
    pub fn new(rho: Vec<S>) -> Result<Self> {
        if rho.is_empty() || rho.iter().any(|r| !(*r > S::zero() && r.is_finite())) {
            return Err(Error::InvalidLoads);
        }
        Ok(Self(rho))
    }

    /// Loads of a closed model with constant service rates.
    pub fn from_model(model: &NetworkModel<S>, traffic: &TrafficSolution<S>) -> Result<Self> {
        let mu = model.constant_rates()?;
        Self::new(
            traffic
                .alpha
                .iter()
                .zip(&mu)
                .map(|(a, m)| *a / *m)
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[S] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn max(&self) -> S {
        self.0.iter().copied().fold(S::zero(), S::max)
    }

    /// Loads divided by the largest one, and that largest load.
    fn scaled(&self) -> (Vec<S>, S) {
        let top = self.max();
        (self.0.iter().map(|r| *r / top).collect(), top)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Enumeration,
    Convolution,
    HarrisonDistinct,
    HarrisonDegenerate,
    /// Enumeration over state-dependent weights `prod alpha_j^{n_j} / prod_r mu_j(r)`.
    GeneralizedEnumeration,
    /// Convolution over state-dependent weights.
    GeneralizedConvolution,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Enumeration => "enumeration",
            Method::Convolution => "convolution",
            Method::HarrisonDistinct => "harrison-distinct",
            Method::HarrisonDegenerate => "harrison-degenerate",
            Method::GeneralizedEnumeration => "generalized-enumeration",
            Method::GeneralizedConvolution => "generalized-convolution",
        }
    }
}

/// A second method's value for the same constant.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossCheck<S> {
    pub method: Method,
    pub g: S,
    pub relative_error: S,
    pub agrees: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizingConstant<S> {
    pub g: S,
    pub b_n: S,
    pub method: Method,
    pub cross_check: Option<CrossCheck<S>>,
}

impl<S: Scalar> NormalizingConstant<S> {
    fn new(g: S, method: Method) -> Self {
        Self {
            g,
            b_n: S::one() / g,
            method,
            cross_check: None,
        }
    }

    pub fn relative_error(&self, reference: S) -> S {
        ((self.g - reference) / reference).abs()
    }
}

/// Nodes sharing one load value.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadGroup<S> {
    pub value: S,
    pub nodes: Vec<usize>,
}

/// Partition of the nodes by (numerically) equal load.
#[derive(Clone, Debug, PartialEq)]
pub struct Multiplicity<S> {
    groups: Vec<LoadGroup<S>>,
    group_of: Vec<usize>,
}

impl<S: Scalar> Multiplicity<S> {
    /// Groups loads whose relative difference is at most `rel_tol`.
    pub fn from_loads(loads: &LoadVector<S>, rel_tol: f64) -> Self {
        let rho = loads.as_slice();
        let mut order: Vec<usize> = (0..rho.len()).collect();
        order.sort_by(|&a, &b| rho[a].partial_cmp(&rho[b]).expect("finite loads"));
        let tol = S::lit(rel_tol);
        let mut groups: Vec<LoadGroup<S>> = Vec::new();
        let mut group_of = vec![0; rho.len()];
        for j in order {
            match groups.last_mut() {
                Some(g) if (rho[j] - g.value).abs() <= tol * rho[j].max(g.value) => g.nodes.push(j),
                _ => groups.push(LoadGroup {
                    value: rho[j],
                    nodes: vec![j],
                }),
            }
            group_of[j] = groups.len() - 1;
        }
        for g in &mut groups {
            let sum: S = g.nodes.iter().map(|&j| rho[j]).sum();
            g.value = sum / S::from_usize_lossy(g.nodes.len());
        }
        Self { groups, group_of }
    }

    pub fn groups(&self) -> &[LoadGroup<S>] {
        &self.groups
    }

    /// Number of other nodes sharing the load of node `j`.
    pub fn d(&self, j: usize) -> usize {
        self.groups[self.group_of[j]].nodes.len() - 1
    }

    pub fn is_degenerate(&self) -> bool {
        self.groups.iter().any(|g| g.nodes.len() > 1)
    }
}

/// Sum of `prod rho_j^{n_j}` over the simplex, by explicit enumeration.
pub fn g_enumeration<S: Scalar>(
    loads: &LoadVector<S>,
    population: usize,
) -> Result<NormalizingConstant<S>> {
    g_enumeration_with_limit(loads, population, ENUMERATION_LIMIT)
}

pub fn g_enumeration_with_limit<S: Scalar>(
    loads: &LoadVector<S>,
    population: usize,
    limit: u128,
) -> Result<NormalizingConstant<S>> {
    let states = StateSpace::simplex_size(loads.len(), population);
    if states > limit {
        return Err(Error::StateSpaceTooLarge { states, limit });
    }
    let (rho, top) = loads.scaled();
    let mut acc = CompensatedSum::new();
    enumerate(&rho, 0, population, S::one(), &mut acc);
    Ok(NormalizingConstant::new(
        acc.value() * top.powi(population as i32),
        Method::Enumeration,
    ))
}

fn enumerate<S: Scalar>(
    rho: &[S],
    pos: usize,
    remaining: usize,
    weight: S,
    acc: &mut CompensatedSum<S>,
) {
    if pos + 1 == rho.len() {
        acc.add(weight * rho[pos].powi(remaining as i32));
        return;
    }
    let mut w = weight;
    for v in 0..=remaining {
        enumerate(rho, pos + 1, remaining - v, w, acc);
        w *= rho[pos];
    }
}

/// Convolution recursion `g(j,n) = g(j-1,n) + rho_j g(j,n-1)`, O(J N).
pub fn g_convolution<S: Scalar>(
    loads: &LoadVector<S>,
    population: usize,
) -> NormalizingConstant<S> {
    let (rho, top) = loads.scaled();
    let mut g = vec![S::zero(); population + 1];
    g[0] = S::one();
    for r in &rho {
        for n in 1..=population {
            let prev = g[n - 1];
            g[n] += *r * prev;
        }
    }
    NormalizingConstant::new(
        g[population] * top.powi(population as i32),
        Method::Convolution,
    )
}

/// Closed form for pairwise distinct loads:
/// `G = sum_j rho_j^{N+J-1} / prod_{i != j} (rho_j - rho_i)`.
pub fn g_harrison_distinct<S: Scalar>(
    loads: &LoadVector<S>,
    population: usize,
) -> Result<NormalizingConstant<S>> {
    let raw = loads.as_slice();
    let tol = S::lit(DISTINCT_TOLERANCE);
    for i in 0..raw.len() {
        for j in i + 1..raw.len() {
            if (raw[i] - raw[j]).abs() <= tol * raw[i].max(raw[j]) {
                return Err(Error::DegenerateLoads {
                    first: i,
                    second: j,
                });
            }
        }
    }
    let (rho, top) = loads.scaled();
    let power = (population + rho.len() - 1) as i32;
    let acc: CompensatedSum<S> = rho
        .iter()
        .enumerate()
        .map(|(j, &rj)| {
            let denom = rho
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .fold(S::one(), |d, (_, &ri)| d * (rj - ri));
            rj.powi(power) / denom
        })
        .collect();
    Ok(NormalizingConstant::new(
        acc.value() * top.powi(population as i32),
        Method::HarrisonDistinct,
    ))
}

/// Confluent limit of the distinct-load formula for repeated loads.
///
/// For a group of `m = d + 1` nodes sharing load `v`, the contribution is the
/// `(m-1)`-th derivative at `v`, divided by `(m-1)!`, of
/// `x^{N+J-1} / prod_{other groups h} (x - v_h)^{m_h}`. The derivative is taken
/// as a Taylor coefficient of the product of the factor expansions around `v`.
pub fn g_harrison_degenerate<S: Scalar>(
    loads: &LoadVector<S>,
    population: usize,
    mult: &Multiplicity<S>,
) -> Result<NormalizingConstant<S>> {
    if !mult.is_degenerate() {
        return Err(Error::DistinctLoads);
    }
    let (_, top) = loads.scaled();
    let groups: Vec<(S, usize)> = mult
        .groups()
        .iter()
        .map(|g| (g.value / top, g.nodes.len()))
        .collect();
    let power = population + loads.len() - 1;
    let mut acc = CompensatedSum::new();
    for (g, &(v, m)) in groups.iter().enumerate() {
        // Taylor coefficients of (v + t)^power up to t^{m-1}
        let mut series: Vec<S> = (0..m)
            .map(|k| binomial_coeff::<S>(power, k) * v.powi((power - k) as i32))
            .collect();
        for (h, &(vh, mh)) in groups.iter().enumerate() {
            if h == g {
                continue;
            }
            // (d + t)^{-mh} = sum_k C(mh+k-1, k) (-1)^k d^{-mh-k} t^k
            let d = v - vh;
            let factor: Vec<S> = (0..m)
                .map(|k| {
                    let sign = if k % 2 == 0 { S::one() } else { -S::one() };
                    sign * binomial_coeff::<S>(mh + k - 1, k) * d.powi(-((mh + k) as i32))
                })
                .collect();
            series = truncated_product(&series, &factor);
        }
        acc.add(series[m - 1]);
    }
    Ok(NormalizingConstant::new(
        acc.value() * top.powi(population as i32),
        Method::HarrisonDegenerate,
    ))
}

fn truncated_product<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    (0..a.len())
        .map(|k| (0..=k).map(|i| a[i] * b[k - i]).sum())
        .collect()
}

fn binomial_coeff<S: Scalar>(n: usize, k: usize) -> S {
    (0..k).fold(S::one(), |acc, i| {
        acc * S::from_usize_lossy(n - i) / S::from_usize_lossy(i + 1)
    })
}

/// Distinct or degenerate closed form, whichever the loads call for.
pub fn g_harrison<S: Scalar>(
    loads: &LoadVector<S>,
    population: usize,
) -> Result<NormalizingConstant<S>> {
    let mult = Multiplicity::from_loads(loads, DISTINCT_TOLERANCE);
    if mult.is_degenerate() {
        g_harrison_degenerate(loads, population, &mult)
    } else {
        g_harrison_distinct(loads, population)
    }
}

fn node_weights<S: Scalar>(alpha: S, service: &ServiceRate<S>, population: usize) -> Vec<S> {
    let mut w = Vec::with_capacity(population + 1);
    w.push(S::one());
    for n in 1..=population {
        let prev = w[n - 1];
        w.push(prev * alpha / service.rate(n));
    }
    w
}

/// `G` over the weights `prod_j alpha_j^{n_j} / prod_{r <= n_j} mu_j(r)`, by enumeration.
pub fn g_weighted_enumeration<S: Scalar>(
    model: &NetworkModel<S>,
    traffic: &TrafficSolution<S>,
    limit: u128,
) -> Result<NormalizingConstant<S>> {
    let population = model.population().ok_or(Error::NotClosed)?;
    let states = StateSpace::simplex_size(model.nodes(), population);
    if states > limit {
        return Err(Error::StateSpaceTooLarge { states, limit });
    }
    let weights: Vec<Vec<S>> = (0..model.nodes())
        .map(|j| node_weights(traffic.alpha[j], &model.service()[j], population))
        .collect();
    let mut acc = CompensatedSum::new();
    weighted(&weights, 0, population, S::one(), &mut acc);
    Ok(NormalizingConstant::new(
        acc.value(),
        Method::GeneralizedEnumeration,
    ))
}

fn weighted<S: Scalar>(
    w: &[Vec<S>],
    pos: usize,
    remaining: usize,
    acc_w: S,
    acc: &mut CompensatedSum<S>,
) {
    if pos + 1 == w.len() {
        acc.add(acc_w * w[pos][remaining]);
        return;
    }
    for v in 0..=remaining {
        weighted(w, pos + 1, remaining - v, acc_w * w[pos][v], acc);
    }
}

/// `G` over state-dependent weights by convolving the per-node weight sequences.
pub fn g_weighted_convolution<S: Scalar>(
    model: &NetworkModel<S>,
    traffic: &TrafficSolution<S>,
) -> Result<NormalizingConstant<S>> {
    let population = model.population().ok_or(Error::NotClosed)?;
    let mut g = vec![S::zero(); population + 1];
    g[0] = S::one();
    for j in 0..model.nodes() {
        let w = node_weights(traffic.alpha[j], &model.service()[j], population);
        g = (0..=population)
            .map(|n| (0..=n).map(|m| w[m] * g[n - m]).sum())
            .collect();
    }
    Ok(NormalizingConstant::new(
        g[population],
        Method::GeneralizedConvolution,
    ))
}

fn attach<S: Scalar>(
    mut primary: NormalizingConstant<S>,
    other: NormalizingConstant<S>,
) -> NormalizingConstant<S> {
    let relative_error = other.relative_error(primary.g);
    primary.cross_check = Some(CrossCheck {
        method: other.method,
        g: other.g,
        relative_error,
        agrees: relative_error <= S::tol(AGREEMENT_TOLERANCE),
    });
    primary
}

/// `B_N` of a closed model.
///
/// Constant rates: convolution, cross-checked by the matching closed form.
/// State-dependent rates: enumeration of the general weights, cross-checked by
/// their convolution. A disagreement is recorded in `cross_check`, not raised.
pub fn compute_b<S: Scalar>(
    model: &NetworkModel<S>,
    traffic: &TrafficSolution<S>,
) -> Result<NormalizingConstant<S>> {
    compute_b_with_limit(model, traffic, ENUMERATION_LIMIT)
}

pub fn compute_b_with_limit<S: Scalar>(
    model: &NetworkModel<S>,
    traffic: &TrafficSolution<S>,
    limit: u128,
) -> Result<NormalizingConstant<S>> {
    let population = model.population().ok_or(Error::NotClosed)?;
    match LoadVector::from_model(model, traffic) {
        Ok(loads) => {
            let conv = g_convolution(&loads, population);
            let closed = g_harrison(&loads, population)?;
            Ok(attach(conv, closed))
        }
        Err(Error::NonConstantRates(_)) => {
            let enumerated = g_weighted_enumeration(model, traffic, limit)?;
            let conv = g_weighted_convolution(model, traffic)?;
            Ok(attach(enumerated, conv))
        }
        Err(e) => Err(e),
    }
}
