//! Seeded discrete-event simulation of the network process.
//!
//! Every active source (exogenous arrival stream, busy server) draws an
//! exponential clock after each state change and the earliest one fires.
//! Memorylessness makes this equal in law to the CTMC with the model's rates.
//! Randomness comes from one ChaCha stream per (replication, purpose), so the
//! output depends only on the seed and configuration.

mod stats;

pub use stats::{
    departure_poisson_test, departure_state_independence_smoketest, dispersion_index,
    empirical_vs_analytic, ks_critical_value, ks_statistic, DepartureVerdict, IndependenceVerdict,
    TvReport, DISPERSION_RANGE, KS_SIGNIFICANCE, MIN_EXIT_SAMPLES, RATE_TOLERANCE,
};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::NetworkModel;
use crate::productform::check_stability;
use crate::traffic::solve_open_traffic;

/// Number of equal time batches used for batch-means standard errors.
pub const BATCHES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub seed: u64,
    pub warmup_time: f64,
    pub run_time: f64,
    /// Width of the bins used for windowed departure counts.
    pub departure_window: f64,
    pub replications: usize,
    /// Simulate open models with a saturated node anyway.
    pub allow_unstable: bool,
    /// Keep every event in the report.
    pub record_events: bool,
    /// Attach the post-event state to each logged event.
    pub record_snapshots: bool,
    /// Spacing of the state/departure probes used by the independence smoke test.
    pub probe_spacing: Option<f64>,
    /// Accumulate the joint (not only marginal) occupancy.
    pub track_joint: bool,
}

impl SimConfig {
    /// Defaults: warmup at 10% of `run_time`, departure windows of width 10, one replication.
    pub fn new(seed: u64, run_time: f64) -> Self {
        Self {
            seed,
            warmup_time: 0.1 * run_time,
            run_time,
            departure_window: 10.0,
            replications: 1,
            allow_unstable: false,
            record_events: false,
            record_snapshots: false,
            probe_spacing: None,
            track_joint: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.warmup_time >= 0.0
            && self.run_time > self.warmup_time
            && self.run_time.is_finite())
        {
            return Err(Error::InvalidConfig(
                "need run_time > warmup_time >= 0".into(),
            ));
        }
        if !(self.departure_window > 0.0) {
            return Err(Error::InvalidConfig(
                "departure_window must be positive".into(),
            ));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("at least one replication".into()));
        }
        if let Some(s) = self.probe_spacing {
            if !(s > 0.0) {
                return Err(Error::InvalidConfig(
                    "probe_spacing must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    ExogenousArrival { node: usize },
    Transfer { from: usize, to: usize },
    Departure { node: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_after: Option<Vec<usize>>,
}

/// Queue lengths at a probe instant and the exits per node in the preceding window.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub time: f64,
    pub state: Vec<usize>,
    pub recent_exits: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicationReport {
    pub replication: usize,
    pub observed_time: f64,
    pub events: u64,
    /// Time spent at each queue length, per node, after warmup.
    pub occupancy: Vec<Vec<f64>>,
    pub joint_occupancy: Option<BTreeMap<Vec<usize>, f64>>,
    /// Exterior departure instants after warmup, per node.
    pub exit_times: Vec<Vec<f64>>,
    /// Exterior departures in consecutive windows after warmup, per node.
    pub window_counts: Vec<Vec<u64>>,
    /// Arrivals (exogenous plus internal) after warmup, per node.
    pub arrivals: Vec<u64>,
    pub arrival_batches: Vec<Vec<u64>>,
    pub probes: Vec<Probe>,
    pub log: Vec<EventRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationReport {
    pub config: SimConfig,
    pub nodes: usize,
    pub open: bool,
    pub exit_probabilities: Vec<f64>,
    pub replications: Vec<ReplicationReport>,
}

impl SimulationReport {
    /// Simulated time after warmup, summed over replications.
    pub fn total_time(&self) -> f64 {
        self.replications.iter().map(|r| r.observed_time).sum()
    }

    /// Pooled time-weighted queue-length pmf of one node.
    pub fn pmf(&self, node: usize) -> Vec<f64> {
        let len = self
            .replications
            .iter()
            .map(|r| r.occupancy[node].len())
            .max()
            .unwrap_or(0);
        let mut pmf = vec![0.0; len];
        for r in &self.replications {
            for (n, t) in r.occupancy[node].iter().enumerate() {
                pmf[n] += t;
            }
        }
        let total: f64 = pmf.iter().sum();
        pmf.iter_mut().for_each(|p| *p /= total);
        pmf
    }

    /// Pooled joint pmf in state order; `None` unless joint tracking was enabled.
    pub fn joint_pmf(&self) -> Option<Vec<(Vec<usize>, f64)>> {
        let mut pooled: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for r in &self.replications {
            for (s, t) in r.joint_occupancy.as_ref()? {
                *pooled.entry(s.clone()).or_insert(0.0) += t;
            }
        }
        let total: f64 = pooled.values().sum();
        Some(pooled.into_iter().map(|(s, t)| (s, t / total)).collect())
    }

    pub fn exit_count(&self, node: usize) -> usize {
        self.replications
            .iter()
            .map(|r| r.exit_times[node].len())
            .sum()
    }

    /// Gaps between consecutive post-warmup exits, replication by replication.
    pub fn interdeparture_times(&self, node: usize) -> Vec<f64> {
        self.replications
            .iter()
            .flat_map(|r| r.exit_times[node].windows(2).map(|w| w[1] - w[0]))
            .collect()
    }

    pub fn window_counts(&self, node: usize) -> Vec<u64> {
        self.replications
            .iter()
            .flat_map(|r| r.window_counts[node].iter().copied())
            .collect()
    }

    pub fn arrival_rate(&self, node: usize) -> f64 {
        let count: u64 = self.replications.iter().map(|r| r.arrivals[node]).sum();
        count as f64 / self.total_time()
    }

    /// Batch-means standard error of [`Self::arrival_rate`].
    pub fn arrival_rate_std_error(&self, node: usize) -> f64 {
        let rates: Vec<f64> = self
            .replications
            .iter()
            .flat_map(|r| {
                let width = r.observed_time / BATCHES as f64;
                r.arrival_batches[node]
                    .iter()
                    .map(move |&c| c as f64 / width)
            })
            .collect();
        let k = rates.len() as f64;
        let mean = rates.iter().sum::<f64>() / k;
        let var = rates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    }

    pub fn probes(&self) -> impl Iterator<Item = &Probe> {
        self.replications.iter().flat_map(|r| r.probes.iter())
    }
}

#[derive(Clone, Copy)]
enum Purpose {
    Arrivals = 0,
    Services = 1,
    Routing = 2,
}

fn stream(seed: u64, replication: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication as u64 * 3 + purpose as u64);
    rng
}

fn exp_sample(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / rate
}

/// Runs every replication of the configured simulation.
pub fn run(model: &NetworkModel<f64>, config: &SimConfig) -> Result<SimulationReport> {
    config.validate()?;
    if model.is_open() {
        let traffic = solve_open_traffic(model)?;
        if let Some(v) = check_stability(model, &traffic)
            .into_iter()
            .find(|v| !v.stable)
        {
            if !config.allow_unstable {
                return Err(Error::UnstableOpenModel {
                    node: v.node,
                    load: v.load,
                });
            }
        }
    }
    let replications = (0..config.replications)
        .into_par_iter()
        .map(|rep| simulate_one(model, config, rep))
        .collect();
    Ok(SimulationReport {
        config: config.clone(),
        nodes: model.nodes(),
        open: model.is_open(),
        exit_probabilities: model.routing().exits().to_vec(),
        replications,
    })
}

fn initial_state(model: &NetworkModel<f64>) -> Vec<usize> {
    let mut n = vec![0; model.nodes()];
    if let Some(pop) = model.population() {
        n[0] = pop;
    }
    n
}

fn simulate_one(
    model: &NetworkModel<f64>,
    config: &SimConfig,
    replication: usize,
) -> ReplicationReport {
    let j_count = model.nodes();
    let routing = model.routing();
    let nu: Vec<f64> = model
        .arrivals()
        .map_or_else(|| vec![0.0; j_count], <[f64]>::to_vec);
    let mut arrivals_rng = stream(config.seed, replication, Purpose::Arrivals);
    let mut services_rng = stream(config.seed, replication, Purpose::Services);
    let mut routing_rng = stream(config.seed, replication, Purpose::Routing);

    let warmup = config.warmup_time;
    let horizon = config.run_time;
    let observed = horizon - warmup;
    let batch_width = observed / BATCHES as f64;
    let windows = (observed / config.departure_window).floor() as usize;

    let mut n = initial_state(model);
    let mut report = ReplicationReport {
        replication,
        observed_time: observed,
        events: 0,
        occupancy: vec![Vec::new(); j_count],
        joint_occupancy: config.track_joint.then(BTreeMap::new),
        exit_times: vec![Vec::new(); j_count],
        window_counts: vec![vec![0; windows]; j_count],
        arrivals: vec![0; j_count],
        arrival_batches: vec![vec![0; BATCHES]; j_count],
        probes: Vec::new(),
        log: Vec::new(),
    };
    let mut next_probe = config
        .probe_spacing
        .map(|_| warmup + config.departure_window);

    let mut t = 0.0;
    loop {
        // earliest exponential clock among active sources
        let mut best: Option<(f64, EventSource)> = None;
        for (k, &rate) in nu.iter().enumerate() {
            if rate > 0.0 {
                let dt = exp_sample(&mut arrivals_rng, rate);
                if best.is_none_or(|(b, _)| dt < b) {
                    best = Some((dt, EventSource::Arrival(k)));
                }
            }
        }
        for j in 0..j_count {
            if n[j] > 0 {
                let dt = exp_sample(&mut services_rng, model.mu(j, n[j]));
                if best.is_none_or(|(b, _)| dt < b) {
                    best = Some((dt, EventSource::Service(j)));
                }
            }
        }
        let (dt, source) = match best {
            Some(b) => b,
            None => (f64::INFINITY, EventSource::Arrival(0)),
        };
        let t_next = (t + dt).min(horizon);

        // the state n holds on [t, t_next)
        while let Some(tp) = next_probe {
            if tp > t_next || tp > horizon {
                break;
            }
            report.probes.push(Probe {
                time: tp,
                state: n.clone(),
                recent_exits: Vec::new(),
            });
            next_probe = Some(tp + config.probe_spacing.expect("probing enabled"));
        }
        let lo = t.max(warmup);
        if t_next > lo {
            let span = t_next - lo;
            for (j, &x) in n.iter().enumerate() {
                let occ = &mut report.occupancy[j];
                if occ.len() <= x {
                    occ.resize(x + 1, 0.0);
                }
                occ[x] += span;
            }
            if let Some(joint) = report.joint_occupancy.as_mut() {
                match joint.get_mut(&n[..]) {
                    Some(v) => *v += span,
                    None => {
                        joint.insert(n.clone(), span);
                    }
                }
            }
        }
        if t + dt >= horizon {
            break;
        }
        t += dt;
        report.events += 1;

        let kind = match source {
            EventSource::Arrival(k) => {
                n[k] += 1;
                EventKind::ExogenousArrival { node: k }
            }
            EventSource::Service(j) => {
                n[j] -= 1;
                let u: f64 = routing_rng.random();
                let mut acc = 0.0;
                let mut dest = None;
                for (k, p) in routing.row(j).iter().enumerate() {
                    acc += p;
                    if *p > 0.0 && u < acc {
                        dest = Some(k);
                        break;
                    }
                }
                // closed rows sum to one; rounding never sends a customer outside
                if dest.is_none() && !model.is_open() {
                    dest = routing.successors(j).last();
                }
                match dest {
                    Some(k) => {
                        n[k] += 1;
                        EventKind::Transfer { from: j, to: k }
                    }
                    None => EventKind::Departure { node: j },
                }
            }
        };

        if t >= warmup {
            let batch = (((t - warmup) / batch_width) as usize).min(BATCHES - 1);
            match kind {
                EventKind::ExogenousArrival { node } | EventKind::Transfer { to: node, .. } => {
                    report.arrivals[node] += 1;
                    report.arrival_batches[node][batch] += 1;
                }
                EventKind::Departure { .. } => {}
            }
            if let EventKind::Departure { node } = kind {
                report.exit_times[node].push(t);
                let w = ((t - warmup) / config.departure_window) as usize;
                if w < windows {
                    report.window_counts[node][w] += 1;
                }
            }
        }
        if config.record_events {
            report.log.push(EventRecord {
                time: t,
                kind,
                state_after: config.record_snapshots.then(|| n.clone()),
            });
        }
    }

    let w = config.departure_window;
    for probe in &mut report.probes {
        probe.recent_exits = report
            .exit_times
            .iter()
            .map(|times| {
                let hi = times.partition_point(|&x| x <= probe.time);
                let lo = times.partition_point(|&x| x <= probe.time - w);
                (hi - lo) as u64
            })
            .collect();
    }
    report
}

#[derive(Clone, Copy)]
enum EventSource {
    Arrival(usize),
    Service(usize),
}
