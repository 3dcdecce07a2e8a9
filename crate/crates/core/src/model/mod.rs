//! Network description: routing, service rates, and open/closed discriminant.

mod spec;
mod validate;

pub use spec::{KindSpec, NetworkSpec, ServiceSpec};
pub use validate::{reachable_exit, validate, ValidationReport, Violation};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Commutation probabilities `p(j,k)` together with the exit probabilities `p(j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutingMatrix<S> {
    size: usize,
    p: Vec<S>,
    exit: Vec<S>,
}

impl<S: Scalar> RoutingMatrix<S> {
    /// Builds a routing matrix and derives `exit(j) = 1 - sum_k p(j,k)`.
    pub fn new(rows: Vec<Vec<S>>) -> Result<Self> {
        let size = rows.len();
        let p = flatten(rows, size)?;
        let exit = (0..size)
            .map(|j| S::one() - p[j * size..(j + 1) * size].iter().copied().sum::<S>())
            .collect();
        Ok(Self { size, p, exit })
    }

    /// Builds a routing matrix with an explicitly supplied exit vector.
    ///
    /// Consistency between `exit` and the row sums is checked by [`validate`].
    pub fn with_exit(rows: Vec<Vec<S>>, exit: Vec<S>) -> Result<Self> {
        let size = rows.len();
        if exit.len() != size {
            return Err(Error::MalformedSpec(format!(
                "exit vector has {} entries, expected {size}",
                exit.len()
            )));
        }
        let p = flatten(rows, size)?;
        Ok(Self { size, p, exit })
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    /// `p(from, to)`, 0-based.
    #[inline]
    pub fn p(&self, from: usize, to: usize) -> S {
        self.p[from * self.size + to]
    }

    #[inline]
    pub fn exit(&self, node: usize) -> S {
        self.exit[node]
    }

    pub fn exits(&self) -> &[S] {
        &self.exit
    }

    pub fn row(&self, from: usize) -> &[S] {
        &self.p[from * self.size..(from + 1) * self.size]
    }

    pub fn row_sum(&self, from: usize) -> S {
        self.row(from).iter().copied().sum()
    }

    pub fn rows(&self) -> Vec<Vec<S>> {
        (0..self.size).map(|j| self.row(j).to_vec()).collect()
    }

    /// Successors of `from` along edges with positive probability.
    pub fn successors(&self, from: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(from)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > S::zero())
            .map(|(k, _)| k)
    }
}

fn flatten<S: Scalar>(rows: Vec<Vec<S>>, size: usize) -> Result<Vec<S>> {
    if size == 0 {
        return Err(Error::MalformedSpec(
            "network must have at least one node".into(),
        ));
    }
    let mut p = Vec::with_capacity(size * size);
    for (j, row) in rows.into_iter().enumerate() {
        if row.len() != size {
            return Err(Error::MalformedSpec(format!(
                "routing row {} has {} entries, expected {size}",
                j + 1,
                row.len()
            )));
        }
        p.extend(row);
    }
    Ok(p)
}

/// Service-rate function `mu_j(n)` of a single node.
///
/// A table `[mu(1), ..., mu(K)]` repeats its last entry for every `n > K`.
/// `mu(0)` is zero in both variants.
#[derive(Clone, Debug, PartialEq)]
pub enum ServiceRate<S> {
    Constant(S),
    Table(Vec<S>),
}

impl<S: Scalar> ServiceRate<S> {
    #[inline]
    pub fn rate(&self, n: usize) -> S {
        if n == 0 {
            return S::zero();
        }
        match self {
            ServiceRate::Constant(mu) => *mu,
            ServiceRate::Table(rates) => rates[n.min(rates.len()) - 1],
        }
    }

    /// Rate used for every queue length beyond the table.
    pub fn tail_rate(&self) -> S {
        match self {
            ServiceRate::Constant(mu) => *mu,
            ServiceRate::Table(rates) => *rates.last().expect("non-empty rate table"),
        }
    }

    /// Number of leading queue lengths with an explicit rate.
    pub fn table_len(&self) -> usize {
        match self {
            ServiceRate::Constant(_) => 1,
            ServiceRate::Table(rates) => rates.len(),
        }
    }

    /// The rate if it does not depend on the queue length.
    pub fn constant_rate(&self) -> Option<S> {
        match self {
            ServiceRate::Constant(mu) => Some(*mu),
            ServiceRate::Table(rates) => {
                let first = *rates.first()?;
                rates.iter().all(|&r| r == first).then_some(first)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NetworkKind<S> {
    /// Exogenous Poisson arrival rates `nu_j`.
    Open { arrivals: Vec<S> },
    /// Fixed population circulating among the nodes.
    Closed { population: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel<S> {
    routing: RoutingMatrix<S>,
    service: Vec<ServiceRate<S>>,
    kind: NetworkKind<S>,
}

impl<S: Scalar> NetworkModel<S> {
    /// Assembles a model, checking only that dimensions agree.
    pub fn new(
        routing: RoutingMatrix<S>,
        service: Vec<ServiceRate<S>>,
        kind: NetworkKind<S>,
    ) -> Result<Self> {
        let j = routing.size();
        if service.len() != j {
            return Err(Error::MalformedSpec(format!(
                "{} service entries for {j} nodes",
                service.len()
            )));
        }
        if let NetworkKind::Open { arrivals } = &kind {
            if arrivals.len() != j {
                return Err(Error::MalformedSpec(format!(
                    "{} arrival rates for {j} nodes",
                    arrivals.len()
                )));
            }
        }
        Ok(Self {
            routing,
            service,
            kind,
        })
    }

    pub fn open(rows: Vec<Vec<S>>, service: Vec<ServiceRate<S>>, arrivals: Vec<S>) -> Result<Self> {
        Self::new(
            RoutingMatrix::new(rows)?,
            service,
            NetworkKind::Open { arrivals },
        )
    }

    pub fn closed(
        rows: Vec<Vec<S>>,
        service: Vec<ServiceRate<S>>,
        population: usize,
    ) -> Result<Self> {
        Self::new(
            RoutingMatrix::new(rows)?,
            service,
            NetworkKind::Closed { population },
        )
    }

    /// Validates the model, turning any violation into an error.
    pub fn validated(self) -> Result<Self> {
        let report = validate(&self);
        if report.is_valid() {
            Ok(self)
        } else {
            Err(Error::InvalidModel(report))
        }
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.routing.size()
    }

    pub fn routing(&self) -> &RoutingMatrix<S> {
        &self.routing
    }

    pub fn service(&self) -> &[ServiceRate<S>] {
        &self.service
    }

    #[inline]
    pub fn mu(&self, node: usize, n: usize) -> S {
        self.service[node].rate(n)
    }

    pub fn kind(&self) -> &NetworkKind<S> {
        &self.kind
    }

    pub fn is_open(&self) -> bool {
        matches!(self.kind, NetworkKind::Open { .. })
    }

    /// Exogenous arrival rates; `None` for closed networks.
    pub fn arrivals(&self) -> Option<&[S]> {
        match &self.kind {
            NetworkKind::Open { arrivals } => Some(arrivals),
            NetworkKind::Closed { .. } => None,
        }
    }

    pub fn population(&self) -> Option<usize> {
        match self.kind {
            NetworkKind::Closed { population } => Some(population),
            NetworkKind::Open { .. } => None,
        }
    }

    /// Constant service rates of every node, if none is state-dependent.
    pub fn constant_rates(&self) -> Result<Vec<S>> {
        self.service
            .iter()
            .enumerate()
            .map(|(j, s)| s.constant_rate().ok_or(Error::NonConstantRates(j)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_exit_is_complement_of_row_sum() {
        let r = RoutingMatrix::new(vec![vec![0.0, 1.0], vec![0.5, 0.0]]).unwrap();
        assert_eq!(r.exits(), &[0.0, 0.5]);
        assert_eq!(r.successors(1).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn ragged_routing_is_rejected() {
        assert!(RoutingMatrix::new(vec![vec![0.0, 1.0], vec![0.0]]).is_err());
        assert!(RoutingMatrix::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn table_rates_use_constant_tail() {
        let s = ServiceRate::Table(vec![1.0, 2.0, 3.0]);
        assert_eq!(s.rate(0), 0.0);
        assert_eq!(s.rate(2), 2.0);
        assert_eq!(s.rate(3), 3.0);
        assert_eq!(s.rate(50), 3.0);
        assert_eq!(s.constant_rate(), None);
        assert_eq!(
            ServiceRate::Table(vec![2.0, 2.0]).constant_rate(),
            Some(2.0)
        );
    }

    #[test]
    fn dimension_mismatch_is_malformed() {
        let r = NetworkModel::open(
            vec![vec![0.0]],
            vec![ServiceRate::Constant(1.0)],
            vec![1.0, 2.0],
        );
        assert!(matches!(r, Err(Error::MalformedSpec(_))));
    }
}
