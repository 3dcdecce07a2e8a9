use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use qnet::normconst::{
    g_convolution, g_enumeration_with_limit, g_harrison, g_harrison_degenerate,
    g_harrison_distinct, LoadVector, Multiplicity, NormalizingConstant, DISTINCT_TOLERANCE,
};
use qnet::traffic::solve_closed_traffic;
use serde::Serialize;

use crate::common::{exit, guard, load_spec, CmdResult, Failure, ENUMERATION_GUARD};
use crate::output::{float, to_json, Table, SCHEMA};
use crate::{Format, Globals};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Enumeration,
    Convolution,
    /// Closed form for pairwise distinct loads.
    HarrisonDistinct,
    /// Closed form for repeated loads.
    HarrisonDegenerate,
    /// Whichever closed form the loads call for.
    Harrison,
}

#[derive(Args, Debug)]
pub struct NormconstArgs {
    /// Closed constant-rate network spec (JSON); alternative to --rho/--population.
    #[arg(conflicts_with_all = ["rho", "population"], required_unless_present = "rho")]
    pub spec: Option<PathBuf>,
    /// Relative loads, comma separated.
    #[arg(long, value_delimiter = ',', requires = "population")]
    pub rho: Option<Vec<f64>>,
    #[arg(long)]
    pub population: Option<usize>,
    /// Methods to run, comma separated.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "enumeration,convolution,harrison"
    )]
    pub methods: Vec<MethodArg>,
    /// Report wall-clock times (makes the output machine dependent).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Serialize)]
struct Row {
    method: &'static str,
    nodes: usize,
    population: usize,
    g: f64,
    b_n: f64,
    relative_error_vs_convolution: f64,
    wall_time: Option<f64>,
}

#[derive(Serialize)]
struct NormconstReport {
    schema: &'static str,
    command: &'static str,
    loads: Vec<f64>,
    population: usize,
    rows: Vec<Row>,
}

fn inputs(args: &NormconstArgs) -> CmdResult<(LoadVector<f64>, usize)> {
    if let Some(path) = &args.spec {
        let loaded = load_spec(path, "normconst")?;
        let population = loaded.model.population().ok_or_else(|| {
            Failure::new(
                exit::MALFORMED,
                "normalizing constants need a closed network",
            )
        })?;
        let traffic = solve_closed_traffic(&loaded.model)?;
        Ok((LoadVector::from_model(&loaded.model, &traffic)?, population))
    } else {
        let rho = args.rho.clone().unwrap_or_default();
        let population = args
            .population
            .ok_or_else(|| Failure::new(exit::MALFORMED, "--rho needs --population"))?;
        Ok((LoadVector::new(rho)?, population))
    }
}

fn evaluate(
    method: MethodArg,
    loads: &LoadVector<f64>,
    population: usize,
) -> CmdResult<NormalizingConstant<f64>> {
    Ok(match method {
        MethodArg::Enumeration => {
            g_enumeration_with_limit(loads, population, guard(ENUMERATION_GUARD)?)?
        }
        MethodArg::Convolution => g_convolution(loads, population),
        MethodArg::HarrisonDistinct => g_harrison_distinct(loads, population)?,
        MethodArg::HarrisonDegenerate => g_harrison_degenerate(
            loads,
            population,
            &Multiplicity::from_loads(loads, DISTINCT_TOLERANCE),
        )?,
        MethodArg::Harrison => g_harrison(loads, population)?,
    })
}

pub fn run(args: &NormconstArgs, globals: &Globals) -> CmdResult<String> {
    let (loads, population) = inputs(args)?;
    let reference = g_convolution(&loads, population).g;
    let mut rows = Vec::new();
    for &method in &args.methods {
        let start = Instant::now();
        let nc = evaluate(method, &loads, population)?;
        let elapsed = start.elapsed().as_secs_f64();
        rows.push(Row {
            method: nc.method.name(),
            nodes: loads.len(),
            population,
            g: nc.g,
            b_n: nc.b_n,
            relative_error_vs_convolution: nc.relative_error(reference),
            wall_time: args.timing.then_some(elapsed),
        });
    }
    Ok(match globals.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&NormconstReport {
            schema: SCHEMA,
            command: "normconst",
            loads: loads.as_slice().to_vec(),
            population,
            rows,
        }),
        Format::Csv => {
            let mut t = Table::new(vec![
                "method",
                "J",
                "N",
                "G",
                "B_N",
                "relative_error_vs_convolution",
                "wall_time",
            ]);
            for r in rows {
                t.push(vec![
                    r.method.to_string(),
                    r.nodes.to_string(),
                    r.population.to_string(),
                    float(r.g),
                    float(r.b_n),
                    float(r.relative_error_vs_convolution),
                    r.wall_time.map_or("NA".into(), float),
                ]);
            }
            t.render()
        }
    })
}
