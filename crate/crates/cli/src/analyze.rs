use std::path::PathBuf;

use clap::Args;
use qnet::model::NetworkSpec;
use qnet::normconst::compute_b_with_limit;
use qnet::productform::{
    check_stability, closed_stationary, metrics, open_stationary, ProductFormDistribution,
};
use qnet::traffic::{solve_traffic, Normalization};
use serde::Serialize;

use crate::common::{
    exit, guard, load_spec, node_label, CmdResult, Failure, ValidationView, ENUMERATION_GUARD,
};
use crate::oracle::{self, OracleComparison};
use crate::output::{float, to_json, Table, SCHEMA};
use crate::{Format, Globals};

const TOP_STATES: usize = 10;
const PMF_HEAD: usize = 10;

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Network spec (JSON).
    pub spec: PathBuf,
    /// Also solve the generator numerically and compare with the product form.
    #[arg(long)]
    pub oracle: bool,
    /// Uniform truncation cap for the open-network oracle (default: tail mass below 1e-8).
    #[arg(long)]
    pub cap: Option<usize>,
    /// Report traffic and loads for an unstable open network instead of failing.
    #[arg(long)]
    pub allow_unstable: bool,
}

#[derive(Serialize)]
pub struct TrafficView {
    pub normalization: &'static str,
    pub alpha: Vec<f64>,
    pub residual: f64,
}

#[derive(Serialize)]
pub struct StabilityView {
    pub node: usize,
    pub load: f64,
    pub stable: bool,
}

#[derive(Serialize)]
pub struct MarginalView {
    pub node: usize,
    pub alpha: f64,
    pub b: f64,
    pub tail_ratio: f64,
    pub pmf_head: Vec<f64>,
}

#[derive(Serialize)]
pub struct CrossCheckView {
    pub method: &'static str,
    pub g: f64,
    pub relative_error: f64,
    pub agrees: bool,
}

#[derive(Serialize)]
pub struct StateProbability {
    pub state: Vec<usize>,
    pub probability: f64,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProductFormView {
    Open {
        marginals: Vec<MarginalView>,
    },
    Closed {
        g: f64,
        b_n: f64,
        method: &'static str,
        cross_check: Option<CrossCheckView>,
        top_states: Vec<StateProbability>,
    },
}

#[derive(Serialize)]
pub struct MetricsView {
    pub node: usize,
    pub mean_queue: f64,
    pub utilization: f64,
    pub throughput: f64,
}

#[derive(Serialize)]
pub struct AnalysisReport {
    pub schema: &'static str,
    pub command: &'static str,
    pub model: NetworkSpec,
    pub validation: ValidationView,
    pub traffic: TrafficView,
    pub stability: Option<Vec<StabilityView>>,
    pub product_form: Option<ProductFormView>,
    pub metrics: Option<Vec<MetricsView>>,
    pub oracle: Option<OracleComparison>,
}

impl AnalysisReport {
    fn csv(&self) -> String {
        let mut t = Table::new(vec![
            "node",
            "alpha",
            "load",
            "mean_queue",
            "utilization",
            "throughput",
        ]);
        for (j, a) in self.traffic.alpha.iter().enumerate() {
            let load = self
                .stability
                .as_ref()
                .map_or("NA".into(), |s| float(s[j].load));
            let m = self.metrics.as_ref().map(|m| &m[j]);
            t.push(vec![
                node_label(j).to_string(),
                float(*a),
                load,
                m.map_or("NA".into(), |m| float(m.mean_queue)),
                m.map_or("NA".into(), |m| float(m.utilization)),
                m.map_or("NA".into(), |m| float(m.throughput)),
            ]);
        }
        t.render()
    }

    fn render(&self, format: Format) -> String {
        match format {
            Format::Json => to_json(self),
            Format::Csv => self.csv(),
        }
    }
}

pub fn run(args: &AnalyzeArgs, globals: &Globals) -> CmdResult<String> {
    let format = globals.format.unwrap_or(Format::Json);
    let loaded = load_spec(&args.spec, "analyze")?;
    let model = &loaded.model;
    let traffic = solve_traffic(model)?;
    let mut report = AnalysisReport {
        schema: SCHEMA,
        command: "analyze",
        model: loaded.spec.clone(),
        validation: (&loaded.validation).into(),
        traffic: TrafficView {
            normalization: match traffic.normalization {
                Normalization::Absolute => "absolute",
                Normalization::ScaledFirstNodeOne => "scaled_first_node_one",
            },
            alpha: traffic.alpha.clone(),
            residual: traffic.residual(model),
        },
        stability: None,
        product_form: None,
        metrics: None,
        oracle: None,
    };

    let dist = if model.is_open() {
        let verdicts = check_stability(model, &traffic);
        report.stability = Some(
            verdicts
                .iter()
                .map(|v| StabilityView {
                    node: node_label(v.node),
                    load: v.load,
                    stable: v.stable,
                })
                .collect(),
        );
        if let Some(v) = verdicts.iter().find(|v| !v.stable) {
            if !args.allow_unstable {
                return Err(Failure::new(
                    exit::UNSTABLE,
                    format!("node {} is unstable (load {})", node_label(v.node), v.load),
                )
                .with_report(report.render(format)));
            }
            None
        } else {
            let pf = open_stationary(model, &traffic)?;
            report.product_form = Some(ProductFormView::Open {
                marginals: pf
                    .marginals
                    .iter()
                    .map(|m| MarginalView {
                        node: node_label(m.node),
                        alpha: m.alpha,
                        b: m.b,
                        tail_ratio: m.tail_ratio(),
                        pmf_head: (0..PMF_HEAD).map(|n| m.pmf(n)).collect(),
                    })
                    .collect(),
            });
            Some(ProductFormDistribution::Open(pf))
        }
    } else {
        let nc = compute_b_with_limit(model, &traffic, guard(ENUMERATION_GUARD)?)?;
        let pf = closed_stationary(model, &traffic, &nc)?;
        report.product_form = Some(ProductFormView::Closed {
            g: nc.g,
            b_n: nc.b_n,
            method: nc.method.name(),
            cross_check: nc.cross_check.as_ref().map(|c| CrossCheckView {
                method: c.method.name(),
                g: c.g,
                relative_error: c.relative_error,
                agrees: c.agrees,
            }),
            top_states: pf
                .top_states(TOP_STATES)
                .into_iter()
                .map(|(s, p)| StateProbability {
                    state: s.0,
                    probability: p,
                })
                .collect(),
        });
        Some(ProductFormDistribution::Closed(pf))
    };

    if let Some(dist) = &dist {
        report.metrics = Some(
            metrics(dist)
                .nodes
                .iter()
                .enumerate()
                .map(|(j, m)| MetricsView {
                    node: node_label(j),
                    mean_queue: m.mean_queue,
                    utilization: m.utilization,
                    throughput: m.throughput,
                })
                .collect(),
        );
    }

    if let (true, Some(dist)) = (args.oracle, &dist) {
        let open_pf = match dist {
            ProductFormDistribution::Open(pf) => Some(pf),
            ProductFormDistribution::Closed(_) => None,
        };
        let space = oracle::oracle_space(model, open_pf, args.cap)?;
        let solved = oracle::solve(model, space)?;
        report.oracle = Some(oracle::compare(&solved, dist));
    }
    Ok(report.render(format))
}
