use std::io::{self, Write};

use super::space::{Operator, SpaceKind, StateSpace};
use crate::error::{Error, Result};
use crate::model::NetworkModel;
use crate::scalar::Scalar;

/// Sparse CTMC generator: off-diagonal rates in CSR form plus the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator<S> {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    rates: Vec<S>,
    diag: Vec<S>,
}

impl<S: Scalar> Generator<S> {
    /// Builds a generator from off-diagonal `(row, col, rate)` triplets.
    ///
    /// Duplicates are summed, zero rates and diagonal triplets are dropped, and the
    /// diagonal is set to the negative row sum.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, S)>) -> Self {
        triplets.retain(|&(r, c, v)| r != c && v != S::zero());
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut rates: Vec<S> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "triplet ({r},{c}) outside {n}x{n}");
            if last == Some((r, c)) {
                *rates.last_mut().expect("previous entry") += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            cols.push(c);
            rates.push(v);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let diag = (0..n)
            .map(|i| -rates[row_ptr[i]..row_ptr[i + 1]].iter().copied().sum::<S>())
            .collect();
        Self {
            row_ptr,
            cols,
            rates,
            diag,
        }
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    /// Number of stored off-diagonal rates.
    pub fn nnz(&self) -> usize {
        self.rates.len()
    }

    /// Off-diagonal entries of row `i` as `(column, rate)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, S)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.rates[span].iter().copied())
    }

    pub fn diag(&self, i: usize) -> S {
        self.diag[i]
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        if i == j {
            return self.diag[i];
        }
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[span.clone()].binary_search(&j) {
            Ok(pos) => self.rates[span.start + pos],
            Err(_) => S::zero(),
        }
    }

    /// All off-diagonal `(row, col, rate)` entries.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        (0..self.size()).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// Largest total out-rate `max_i -q(i,i)`.
    pub fn max_exit_rate(&self) -> S {
        self.diag.iter().fold(S::zero(), |m, d| m.max(-*d))
    }

    /// Row vector product `x Q`.
    pub fn left_multiply(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.size());
        let mut y: Vec<S> = x.iter().zip(&self.diag).map(|(a, d)| *a * *d).collect();
        for (i, &xi) in x.iter().enumerate() {
            if xi == S::zero() {
                continue;
            }
            for (j, v) in self.row(i) {
                y[j] += xi * v;
            }
        }
        y
    }

    /// Largest absolute row sum, zero for a proper generator up to rounding.
    pub fn max_row_sum(&self) -> S {
        (0..self.size())
            .map(|i| (self.diag[i] + self.row(i).map(|(_, v)| v).sum::<S>()).abs())
            .fold(S::zero(), S::max)
    }

    /// Maximum distance of any stored entry from its diagonal, in index units.
    pub fn bandwidth(&self) -> usize {
        self.transitions()
            .map(|(i, j, _)| i.abs_diff(j))
            .max()
            .unwrap_or(0)
    }

    /// Coordinate-list dump `row_state,col_state,rate`, diagonal included.
    pub fn write_csv<W: Write>(&self, space: &StateSpace, mut out: W) -> io::Result<()> {
        writeln!(out, "row_state,col_state,rate")?;
        for i in 0..self.size() {
            let from = space.state(i).joined();
            let mut entries: Vec<(usize, S)> = self.row(i).collect();
            entries.push((i, self.diag[i]));
            entries.sort_by_key(|e| e.0);
            for (j, v) in entries {
                writeln!(
                    out,
                    "\"{from}\",\"{}\",{:.16e}",
                    space.state(j).joined(),
                    v.as_f64()
                )?;
            }
        }
        Ok(())
    }
}

fn check_nodes<S: Scalar>(model: &NetworkModel<S>, space: &StateSpace) -> Result<()> {
    if space.nodes() != model.nodes() {
        return Err(Error::MalformedSpec(format!(
            "state space has {} nodes, model has {}",
            space.nodes(),
            model.nodes()
        )));
    }
    Ok(())
}

/// Generator of an open network on a truncated box; out-of-box transitions are dropped.
pub fn build_generator_open<S: Scalar>(
    model: &NetworkModel<S>,
    space: &StateSpace,
) -> Result<Generator<S>> {
    let nu = model.arrivals().ok_or(Error::NotOpen)?;
    let caps = match space.kind() {
        SpaceKind::OpenTruncated { caps } => caps,
        SpaceKind::ClosedSimplex { .. } => {
            return Err(Error::NotApplicable(
                "open generator needs a truncated box".into(),
            ))
        }
    };
    check_nodes(model, space)?;
    if caps.iter().any(|&c| c < 1) {
        return Err(Error::CapacityTooSmall);
    }
    let routing = model.routing();
    let j_count = model.nodes();
    let stride = |j: usize| space.stride(j).expect("box stride");
    let mut triplets = Vec::new();
    for (i, n) in space.states().iter().enumerate() {
        for j in 0..j_count {
            if n[j] == 0 {
                continue;
            }
            let mu = model.mu(j, n[j]);
            let down = i - stride(j);
            for k in routing.successors(j) {
                if n[k] < caps[k] {
                    triplets.push((i, down + stride(k), routing.p(j, k) * mu));
                }
            }
            if routing.exit(j) > S::zero() {
                triplets.push((i, down, routing.exit(j) * mu));
            }
        }
        for k in 0..j_count {
            if nu[k] > S::zero() && n[k] < caps[k] {
                triplets.push((i, i + stride(k), nu[k]));
            }
        }
    }
    Ok(Generator::from_triplets(space.len(), triplets))
}

/// Generator of a closed network on its population simplex.
pub fn build_generator_closed<S: Scalar>(
    model: &NetworkModel<S>,
    space: &StateSpace,
) -> Result<Generator<S>> {
    let population = model.population().ok_or(Error::NotClosed)?;
    match space.kind() {
        SpaceKind::ClosedSimplex { population: n, .. } if *n == population => {}
        _ => {
            return Err(Error::NotApplicable(
                "closed generator needs the simplex of the model population".into(),
            ))
        }
    }
    check_nodes(model, space)?;
    let routing = model.routing();
    let mut triplets = Vec::new();
    for (i, n) in space.states().iter().enumerate() {
        for j in 0..model.nodes() {
            if n[j] == 0 {
                continue;
            }
            let mu = model.mu(j, n[j]);
            for k in routing.successors(j) {
                let target = n
                    .apply(Operator::Transfer { from: j, to: k })
                    .expect("n_j > 0");
                let idx = space
                    .index_of(&target)
                    .expect("simplex closed under transfers");
                triplets.push((i, idx, routing.p(j, k) * mu));
            }
        }
    }
    Ok(Generator::from_triplets(space.len(), triplets))
}

/// Builds the generator matching the model kind.
pub fn build_generator<S: Scalar>(
    model: &NetworkModel<S>,
    space: &StateSpace,
) -> Result<Generator<S>> {
    if model.is_open() {
        build_generator_open(model, space)
    } else {
        build_generator_closed(model, space)
    }
}
