use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;

use crate::error::{Error, Result};

/// Queue lengths `(n_1, ..., n_J)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateVector(pub Vec<usize>);

/// The state-change operators of the network process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Operator {
    /// One customer moves from `from` to `to`.
    Transfer { from: usize, to: usize },
    /// One customer leaves the network from the given node.
    Departure(usize),
    /// One customer enters the network at the given node.
    Arrival(usize),
}

impl StateVector {
    /// Applies an operator; `None` when the source node is empty.
    pub fn apply(&self, op: Operator) -> Option<StateVector> {
        let mut n = self.0.clone();
        match op {
            Operator::Transfer { from, to } => {
                n[from] = n[from].checked_sub(1)?;
                n[to] += 1;
            }
            Operator::Departure(j) => n[j] = n[j].checked_sub(1)?,
            Operator::Arrival(k) => n[k] += 1,
        }
        Some(StateVector(n))
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Coordinates joined by commas, as used in CSV dumps.
    pub fn joined(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        parts.join(",")
    }
}

impl Deref for StateVector {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for StateVector {
    fn from(v: Vec<usize>) -> Self {
        StateVector(v)
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.joined())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SpaceKind {
    /// Box `0 <= n_j <= caps[j]`.
    OpenTruncated { caps: Vec<usize> },
    /// Simplex `sum_j n_j = population`.
    ClosedSimplex { nodes: usize, population: usize },
}

/// Lexicographically ordered state enumeration with an index bijection.
#[derive(Clone, Debug)]
pub struct StateSpace {
    kind: SpaceKind,
    states: Vec<StateVector>,
    strides: Vec<usize>,
    lookup: HashMap<StateVector, usize>,
}

/// `C(n, k)` as `u128`, saturating on overflow.
pub fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n.saturating_sub(k));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

impl StateSpace {
    /// Number of states in the box with the given per-node caps.
    pub fn box_size(caps: &[usize]) -> u128 {
        caps.iter()
            .try_fold(1u128, |acc, &c| acc.checked_mul(c as u128 + 1))
            .unwrap_or(u128::MAX)
    }

    /// Number of states in the simplex of `population` customers over `nodes` nodes.
    pub fn simplex_size(nodes: usize, population: usize) -> u128 {
        binomial((population + nodes - 1) as u64, (nodes - 1) as u64)
    }

    pub fn open_truncated(caps: Vec<usize>) -> Result<Self> {
        if caps.is_empty() || caps.iter().any(|&c| c < 1) {
            return Err(Error::CapacityTooSmall);
        }
        let size =
            usize::try_from(Self::box_size(&caps)).map_err(|_| Error::StateSpaceTooLarge {
                states: Self::box_size(&caps),
                limit: usize::MAX as u128,
            })?;
        let j = caps.len();
        let mut strides = vec![1usize; j];
        for i in (0..j.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * (caps[i + 1] + 1);
        }
        let mut states = Vec::with_capacity(size);
        let mut n = vec![0usize; j];
        loop {
            states.push(StateVector(n.clone()));
            let mut pos = j;
            loop {
                if pos == 0 {
                    return Ok(Self {
                        kind: SpaceKind::OpenTruncated { caps },
                        states,
                        strides,
                        lookup: HashMap::new(),
                    });
                }
                pos -= 1;
                if n[pos] < caps[pos] {
                    n[pos] += 1;
                    break;
                }
                n[pos] = 0;
            }
        }
    }

    /// Same cap for every node.
    pub fn open_uniform(nodes: usize, cap: usize) -> Result<Self> {
        Self::open_truncated(vec![cap; nodes])
    }

    pub fn closed_simplex(nodes: usize, population: usize) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::MalformedSpec(
                "state space needs at least one node".into(),
            ));
        }
        let size = Self::simplex_size(nodes, population);
        let cap = usize::try_from(size).map_err(|_| Error::StateSpaceTooLarge {
            states: size,
            limit: usize::MAX as u128,
        })?;
        let mut states = Vec::with_capacity(cap);
        let mut n = vec![0usize; nodes];
        fill_simplex(&mut n, 0, population, &mut states);
        let lookup = states
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, s)| (s, i))
            .collect();
        Ok(Self {
            kind: SpaceKind::ClosedSimplex { nodes, population },
            states,
            strides: Vec::new(),
            lookup,
        })
    }

    pub fn kind(&self) -> &SpaceKind {
        &self.kind
    }

    pub fn nodes(&self) -> usize {
        match &self.kind {
            SpaceKind::OpenTruncated { caps } => caps.len(),
            SpaceKind::ClosedSimplex { nodes, .. } => *nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn state(&self, index: usize) -> &StateVector {
        &self.states[index]
    }

    pub fn index_of(&self, n: &[usize]) -> Option<usize> {
        match &self.kind {
            SpaceKind::OpenTruncated { caps } => {
                if n.len() != caps.len() || n.iter().zip(caps).any(|(x, c)| x > c) {
                    return None;
                }
                Some(n.iter().zip(&self.strides).map(|(x, s)| x * s).sum())
            }
            SpaceKind::ClosedSimplex { .. } => self.lookup.get(&StateVector(n.to_vec())).copied(),
        }
    }

    /// Index offset of one customer at `node` in a box space.
    pub(crate) fn stride(&self, node: usize) -> Option<usize> {
        self.strides.get(node).copied()
    }

    /// True when every coordinate lies in `[1, cap - 1]` (box spaces only).
    pub fn is_interior(&self, n: &[usize]) -> bool {
        match &self.kind {
            SpaceKind::OpenTruncated { caps } => n.iter().zip(caps).all(|(&x, &c)| x >= 1 && x < c),
            SpaceKind::ClosedSimplex { .. } => false,
        }
    }
}

fn fill_simplex(n: &mut Vec<usize>, pos: usize, remaining: usize, out: &mut Vec<StateVector>) {
    if pos + 1 == n.len() {
        n[pos] = remaining;
        out.push(StateVector(n.clone()));
        return;
    }
    for v in 0..=remaining {
        n[pos] = v;
        fill_simplex(n, pos + 1, remaining - v, out);
    }
    n[pos] = 0;
}
