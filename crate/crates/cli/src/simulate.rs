use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use qnet::model::NetworkSpec;
use qnet::normconst::compute_b_with_limit;
use qnet::productform::{closed_stationary, open_stationary, ProductFormDistribution};
use qnet::sim::{
    departure_poisson_test, departure_state_independence_smoketest, empirical_vs_analytic,
    run as simulate, DepartureVerdict, IndependenceVerdict, SimConfig, SimulationReport, TvReport,
};
use qnet::traffic::solve_traffic;
use qnet::{Network, Traffic};
use serde::Serialize;

use crate::common::{exit, guard, load_spec, node_label, CmdResult, Failure, ENUMERATION_GUARD};
use crate::output::{float, to_json, Table, SCHEMA};
use crate::{Format, Globals};

const HISTOGRAM_BINS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TestArg {
    /// Poisson test of every exterior departure stream.
    Departures,
    /// Total-variation distance to the product form.
    Marginals,
    /// Correlation of recent exits with the current queue length (consistency check only).
    Independence,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Network spec (JSON).
    pub spec: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Model time per replication.
    #[arg(long, default_value_t = 1e5)]
    pub time: f64,
    /// Discarded initial period (default: 10% of --time).
    #[arg(long)]
    pub warmup: Option<f64>,
    /// Window width for departure counts.
    #[arg(long, default_value_t = 10.0)]
    pub window: f64,
    #[arg(long, default_value_t = 1)]
    pub replications: usize,
    /// Statistical tests to run, comma separated.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub tests: Vec<TestArg>,
    /// Simulate an unstable open network anyway.
    #[arg(long)]
    pub allow_unstable: bool,
    /// Directory for plot-ready CSVs (pmf.csv, departures.csv).
    #[arg(long)]
    pub plot_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct NodeView {
    node: usize,
    arrival_rate: f64,
    arrival_rate_std_error: f64,
    mean_queue: f64,
    exits: usize,
    pmf: Vec<f64>,
}

#[derive(Serialize, Default)]
struct TestsView {
    #[serde(skip_serializing_if = "Option::is_none")]
    departures: Option<Vec<DepartureVerdict>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    marginals: Option<TvReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    independence: Option<Vec<IndependenceVerdict>>,
}

#[derive(Serialize)]
struct SimulateReport {
    schema: &'static str,
    command: &'static str,
    model: NetworkSpec,
    config: SimConfig,
    events: u64,
    observed_time: f64,
    nodes: Vec<NodeView>,
    tests: TestsView,
}

fn exit_nodes(model: &Network) -> Vec<usize> {
    (0..model.nodes())
        .filter(|&j| model.routing().exit(j) > 0.0)
        .collect()
}

fn analytic(model: &Network, traffic: &Traffic) -> CmdResult<ProductFormDistribution<f64>> {
    Ok(if model.is_open() {
        ProductFormDistribution::Open(open_stationary(model, traffic)?)
    } else {
        let nc = compute_b_with_limit(model, traffic, guard(ENUMERATION_GUARD)?)?;
        ProductFormDistribution::Closed(closed_stationary(model, traffic, &nc)?)
    })
}

fn pmf_table(report: &SimulationReport, dist: Option<&ProductFormDistribution<f64>>) -> String {
    let mut t = Table::new(vec!["node", "n", "empirical", "analytic"]);
    for j in 0..report.nodes {
        let closed_marginal = match dist {
            Some(ProductFormDistribution::Closed(d)) => Some(d.marginal(j)),
            _ => None,
        };
        for (n, e) in report.pmf(j).iter().enumerate() {
            let a = match dist {
                Some(ProductFormDistribution::Open(d)) => Some(d.marginals[j].pmf(n)),
                Some(ProductFormDistribution::Closed(_)) => {
                    closed_marginal.as_ref().and_then(|m| m.get(n).copied())
                }
                None => None,
            };
            t.push(vec![
                node_label(j).to_string(),
                n.to_string(),
                float(*e),
                a.map_or("NA".into(), float),
            ]);
        }
    }
    t.render()
}

fn departure_histogram(report: &SimulationReport, model: &Network, traffic: &Traffic) -> String {
    let mut t = Table::new(vec!["node", "bin_lower", "bin_upper", "count", "expected"]);
    for k in exit_nodes(model) {
        let mut gaps = report.interdeparture_times(k);
        if gaps.is_empty() {
            continue;
        }
        gaps.sort_by(f64::total_cmp);
        let rate = traffic.alpha[k] * model.routing().exit(k);
        let top = gaps[(gaps.len() * 99) / 100];
        let width = top / HISTOGRAM_BINS as f64;
        if width.is_nan() || width <= 0.0 {
            continue;
        }
        let total = gaps.len() as f64;
        for b in 0..HISTOGRAM_BINS {
            let (lo, hi) = (b as f64 * width, (b + 1) as f64 * width);
            let count = gaps.partition_point(|&x| x < hi) - gaps.partition_point(|&x| x < lo);
            let expected = total * ((-rate * lo).exp() - (-rate * hi).exp());
            t.push(vec![
                node_label(k).to_string(),
                float(lo),
                float(hi),
                count.to_string(),
                float(expected),
            ]);
        }
    }
    t.render()
}

pub fn run(args: &SimulateArgs, globals: &Globals) -> CmdResult<String> {
    let loaded = load_spec(&args.spec, "simulate")?;
    let model = &loaded.model;
    let wants = |t: TestArg| args.tests.contains(&t);
    if !model.is_open() && (wants(TestArg::Departures) || wants(TestArg::Independence)) {
        return Err(Failure::new(exit::SAMPLES, "closed network has no exits"));
    }

    let mut config = SimConfig::new(args.seed, args.time);
    if let Some(w) = args.warmup {
        config.warmup_time = w;
    }
    config.departure_window = args.window;
    config.replications = args.replications;
    config.allow_unstable = args.allow_unstable;
    config.track_joint = wants(TestArg::Marginals);
    config.probe_spacing = wants(TestArg::Independence).then_some(2.0 * args.window);
    let report = simulate(model, &config)?;
    let traffic = solve_traffic(model)?;

    let mut tests = TestsView::default();
    if wants(TestArg::Departures) {
        let mut verdicts = Vec::new();
        for k in exit_nodes(model) {
            let mut v = departure_poisson_test(&report, &traffic, k)?;
            v.node = node_label(v.node);
            verdicts.push(v);
        }
        tests.departures = Some(verdicts);
    }
    let dist = if wants(TestArg::Marginals) || args.plot_dir.is_some() {
        match analytic(model, &traffic) {
            Ok(d) => Some(d),
            Err(e) if wants(TestArg::Marginals) => return Err(e),
            Err(_) => None,
        }
    } else {
        None
    };
    if wants(TestArg::Marginals) {
        tests.marginals = dist.as_ref().map(|d| empirical_vs_analytic(&report, d));
    }
    if wants(TestArg::Independence) {
        let mut verdicts = Vec::new();
        for k in exit_nodes(model) {
            let mut v = departure_state_independence_smoketest(&report, k)?;
            v.node = node_label(v.node);
            verdicts.push(v);
        }
        tests.independence = Some(verdicts);
    }

    if let Some(dir) = &args.plot_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("pmf.csv"), pmf_table(&report, dist.as_ref()))?;
        if model.is_open() {
            fs::write(
                dir.join("departures.csv"),
                departure_histogram(&report, model, &traffic),
            )?;
        }
    }

    let nodes: Vec<NodeView> = (0..model.nodes())
        .map(|j| {
            let pmf = report.pmf(j);
            NodeView {
                node: node_label(j),
                arrival_rate: report.arrival_rate(j),
                arrival_rate_std_error: report.arrival_rate_std_error(j),
                mean_queue: pmf.iter().enumerate().map(|(n, p)| n as f64 * p).sum(),
                exits: report.exit_count(j),
                pmf,
            }
        })
        .collect();
    let out = SimulateReport {
        schema: SCHEMA,
        command: "simulate",
        model: loaded.spec.clone(),
        config,
        events: report.replications.iter().map(|r| r.events).sum(),
        observed_time: report.total_time(),
        nodes,
        tests,
    };
    Ok(match globals.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&out),
        Format::Csv => pmf_table(&report, dist.as_ref()),
    })
}
