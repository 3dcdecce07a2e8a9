use std::path::PathBuf;

use clap::Args;
use qnet::ctmc::{
    global_balance_residual, reversed_generator, reversed_rates_formula, solve_stationary,
    StateVector,
};
use qnet::model::NetworkSpec;
use qnet::normconst::compute_b_with_limit;
use qnet::productform::{
    check_stability, closed_stationary, open_stationary, verify_partial_balance,
    ProductFormDistribution,
};
use qnet::traffic::solve_traffic;
use qnet::Generator;
use serde::Serialize;

use crate::common::{exit, guard, load_spec, node_label, CmdResult, Failure, ENUMERATION_GUARD};
use crate::oracle::{self, OracleComparison};
use crate::output::{float, to_json, Table, SCHEMA};
use crate::{Format, Globals};

pub const BALANCE_TOLERANCE: f64 = 1e-10;
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;
pub const REVERSED_TOLERANCE: f64 = 1e-9;

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Network spec (JSON).
    pub spec: PathBuf,
    /// Uniform truncation cap for open networks (default: tail mass below 1e-8).
    #[arg(long)]
    pub cap: Option<usize>,
    /// Number of interior states checked for partial balance.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    schema: &'static str,
    command: &'static str,
    model: NetworkSpec,
    states: usize,
    transitions: usize,
    comparison: OracleComparison,
    partial_balance_states: usize,
    reversed_rate_states: usize,
    checks: Vec<Check>,
    pass: bool,
}

/// Evenly spaced picks from `items`, at most `count`.
fn spread<T: Clone>(items: &[T], count: usize) -> Vec<T> {
    if items.len() <= count {
        return items.to_vec();
    }
    (0..count)
        .map(|i| items[i * items.len() / count].clone())
        .collect()
}

/// Largest `|sum_n q'(m,n) - q(m)|`: the reversed process must leave each state at the forward rate.
pub fn reversed_row_sum_residual(q: &Generator, q_rev: &Generator) -> f64 {
    (0..q.size())
        .map(|m| (q_rev.row(m).map(|(_, v)| v).sum::<f64>() + q.diag(m)).abs())
        .fold(0.0, f64::max)
}

pub fn run(args: &VerifyArgs, globals: &Globals) -> CmdResult<String> {
    let loaded = load_spec(&args.spec, "verify")?;
    let model = &loaded.model;
    let traffic = solve_traffic(model)?;
    let (dist, space) = if model.is_open() {
        if let Some(v) = check_stability(model, &traffic)
            .into_iter()
            .find(|v| !v.stable)
        {
            return Err(Failure::new(
                exit::UNSTABLE,
                format!("node {} is unstable (load {})", node_label(v.node), v.load),
            ));
        }
        let pf = open_stationary(model, &traffic)?;
        let space = oracle::oracle_space(model, Some(&pf), args.cap)?;
        (ProductFormDistribution::Open(pf), space)
    } else {
        let space = oracle::oracle_space(model, None, None)?;
        let nc = compute_b_with_limit(model, &traffic, guard(ENUMERATION_GUARD)?)?;
        (
            ProductFormDistribution::Closed(closed_stationary(model, &traffic, &nc)?),
            space,
        )
    };
    let solved = oracle::solve(model, space)?;
    let comparison = oracle::compare(&solved, &dist);
    let space = &solved.space;
    let mut checks = Vec::new();
    let mut check = |name, value: f64, tolerance| {
        checks.push(Check {
            name,
            value,
            tolerance,
            pass: value < tolerance,
        })
    };

    check(
        "oracle_balance_residual",
        comparison.oracle_balance_residual,
        BALANCE_TOLERANCE,
    );
    // states where the truncated generator and the infinite one agree
    let checked: Vec<StateVector> = match &dist {
        ProductFormDistribution::Open(_) => space
            .states()
            .iter()
            .filter(|n| space.is_interior(n))
            .cloned()
            .collect(),
        ProductFormDistribution::Closed(_) => space.states().to_vec(),
    };
    let mut partial_states = 0;
    match &dist {
        ProductFormDistribution::Open(pf) => {
            let sample = spread(&checked, args.samples);
            partial_states = sample.len();
            let mut worst = 0.0f64;
            for n in &sample {
                worst = worst.max(verify_partial_balance(model, pf, n)?.max());
            }
            check("partial_balance_residual", worst, BALANCE_TOLERANCE);
        }
        ProductFormDistribution::Closed(_) => {
            check(
                "product_form_balance_residual",
                comparison.product_form_balance_residual,
                BALANCE_TOLERANCE,
            );
            check(
                "product_form_vs_oracle",
                comparison.max_abs_difference,
                REVERSED_TOLERANCE,
            );
        }
    }

    let q_rev = reversed_generator(&solved.q, &solved.pi)?;
    check(
        "reversed_row_sum",
        reversed_row_sum_residual(&solved.q, &q_rev),
        ROW_SUM_TOLERANCE,
    );
    let pi_rev = solve_stationary(&q_rev)?;
    let stationary_gap = pi_rev
        .iter()
        .zip(&solved.pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(
        "reversed_stationary_gap",
        stationary_gap,
        REVERSED_TOLERANCE,
    );
    check(
        "reversed_balance_residual",
        global_balance_residual(&q_rev, &solved.pi),
        BALANCE_TOLERANCE,
    );

    // closed-form reversed rates against the reversal of the product form itself
    let q_rev_pf = reversed_generator(&solved.q, &oracle::restricted(&dist, space))?;
    let mut worst = 0.0f64;
    for n in &checked {
        let from = space.index_of(n).expect("state in space");
        for r in reversed_rates_formula(model, &traffic, n) {
            let Some(to) = space.index_of(&r.target) else {
                continue;
            };
            let matrix = q_rev_pf.get(from, to);
            let scale = r.rate.abs().max(matrix.abs());
            if scale > 0.0 {
                worst = worst.max((r.rate - matrix).abs() / scale);
            }
        }
    }
    check("reversed_rate_formula", worst, REVERSED_TOLERANCE);

    let pass = checks.iter().all(|c| c.pass);
    let report = VerifyReport {
        schema: SCHEMA,
        command: "verify",
        model: loaded.spec.clone(),
        states: space.len(),
        transitions: solved.q.nnz(),
        comparison,
        partial_balance_states: partial_states,
        reversed_rate_states: checked.len(),
        checks,
        pass,
    };
    Ok(match globals.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&report),
        Format::Csv => {
            let mut t = Table::new(vec!["check", "value", "tolerance", "pass"]);
            for c in &report.checks {
                t.push(vec![
                    c.name.to_string(),
                    float(c.value),
                    float(c.tolerance),
                    c.pass.to_string(),
                ]);
            }
            t.render()
        }
    })
}
