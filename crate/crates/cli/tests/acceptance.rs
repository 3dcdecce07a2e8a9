//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use qnet::ctmc::{
    build_generator, global_balance_residual, reversed_generator, reversed_rates_formula,
    solve_stationary, StateSpace, StateVector,
};
use qnet::model::{validate, ServiceRate};
use qnet::normconst::{
    compute_b, g_convolution, g_enumeration, g_harrison_degenerate, g_harrison_distinct,
    LoadVector, Multiplicity, DISTINCT_TOLERANCE,
};
use qnet::productform::{
    closed_stationary, open_stationary, verify_partial_balance, OpenProductForm,
    ProductFormDistribution,
};
use qnet::sim::{departure_poisson_test, empirical_vs_analytic, run, SimConfig};
use qnet::traffic::{solve_closed_traffic, solve_open_traffic};
use qnet::{Generator, Network, Traffic};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TAIL_MASS: f64 = 1e-8;
/// Largest truncated box solved directly, matching the CLI's dense-solve guard.
const OPEN_STATE_BUDGET: usize = 20_000;
/// Bound on `states * bandwidth^2`, the elimination work of the banded direct solve.
const OPEN_WORK_BUDGET: f64 = 1e9;

struct Outcome {
    pass: bool,
    summary: String,
}

fn report(id: usize, title: &str, outcome: &Outcome) {
    let verdict = if outcome.pass { "PASS" } else { "FAIL" };
    println!("criterion {id} [{verdict}] {title}: {}", outcome.summary);
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------- instances

struct ClosedCase {
    model: Network,
    traffic: Traffic,
    space: StateSpace,
    q: Generator,
    oracle: Vec<f64>,
}

struct OpenCase {
    model: Network,
    traffic: Traffic,
    pf: OpenProductForm<f64>,
    space: StateSpace,
    q: Generator,
    oracle: Vec<f64>,
}

/// Row `j` puts mass `1 - exit[j]` on a random non-empty subset of the other nodes.
fn random_rows(rng: &mut ChaCha8Rng, j: usize, exit: &[f64]) -> Vec<Vec<f64>> {
    (0..j)
        .map(|a| {
            let mut row: Vec<f64> = (0..j)
                .map(|b| {
                    if a != b && rng.random_bool(0.7) {
                        rng.random_range(0.05..1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            if j > 1 && row.iter().all(|w| *w == 0.0) {
                let b = (a + rng.random_range(1..j)) % j;
                row[b] = 1.0;
            }
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter_mut().for_each(|w| *w *= (1.0 - exit[a]) / total);
            }
            row
        })
        .collect()
}

fn random_closed(rng: &mut ChaCha8Rng) -> Network {
    loop {
        let j = rng.random_range(2..=5);
        let n = rng.random_range(1..=8);
        let rows = random_rows(rng, j, &vec![0.0; j]);
        let service = (0..j)
            .map(|_| ServiceRate::Constant(rng.random_range(0.5..5.0)))
            .collect();
        let model = Network::closed(rows, service, n).expect("well-formed");
        if validate(&model).is_valid() {
            return model;
        }
    }
}

/// Relabels nodes so that node `i` of the result is node `perm[i]` of `model`.
fn relabel(model: &Network, perm: &[usize]) -> Network {
    let rows = perm
        .iter()
        .map(|&a| perm.iter().map(|&b| model.routing().p(a, b)).collect())
        .collect();
    let service = perm.iter().map(|&a| model.service()[a].clone()).collect();
    let nu = model.arrivals().expect("open");
    Network::open(rows, service, perm.iter().map(|&a| nu[a]).collect()).expect("well-formed")
}

/// Stable open network with loads in [0.05, 0.8] whose truncated box fits the direct-solve budget.
fn random_open(rng: &mut ChaCha8Rng) -> Network {
    loop {
        let j = rng.random_range(1..=4);
        let exit: Vec<f64> = (0..j).map(|_| rng.random_range(0.1..0.6)).collect();
        let rows = random_rows(rng, j, &exit);
        let mut nu: Vec<f64> = (0..j)
            .map(|_| {
                if rng.random_bool(0.6) {
                    rng.random_range(0.2..1.5)
                } else {
                    0.0
                }
            })
            .collect();
        if nu.iter().all(|v| *v == 0.0) {
            nu[0] = 1.0;
        }
        let probe = Network::open(
            rows.clone(),
            vec![ServiceRate::Constant(1.0); j],
            nu.clone(),
        )
        .expect("well-formed");
        if !validate(&probe).is_valid() {
            continue;
        }
        let alpha = solve_open_traffic(&probe).expect("solvable").alpha;
        for _ in 0..2000 {
            let rho: Vec<f64> = (0..j).map(|_| rng.random_range(0.05..0.8)).collect();
            let service = (0..j)
                .map(|i| ServiceRate::Constant(alpha[i] / rho[i]))
                .collect();
            let model = Network::open(rows.clone(), service, nu.clone()).expect("well-formed");
            let traffic = solve_open_traffic(&model).expect("solvable");
            let caps = open_stationary(&model, &traffic)
                .expect("stable")
                .caps_for_tail_mass(TAIL_MASS);
            // largest cap outermost keeps the generator bandwidth small
            let mut perm: Vec<usize> = (0..j).collect();
            perm.sort_by(|&a, &b| caps[b].cmp(&caps[a]).then(a.cmp(&b)));
            let states: usize = caps.iter().map(|c| c + 1).product();
            let band = states / (caps[perm[0]] + 1);
            if states <= OPEN_STATE_BUDGET
                && states as f64 * (band * band) as f64 <= OPEN_WORK_BUDGET
            {
                return relabel(&model, &perm);
            }
        }
    }
}

// ---------------------------------------------------------------- criterion 1

fn criterion_1() -> (Outcome, Vec<ClosedCase>) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst_diff = 0.0f64;
    let mut worst_residual = 0.0f64;
    let mut cases = Vec::new();
    for _ in 0..200 {
        let model = random_closed(&mut rng);
        let traffic = solve_closed_traffic(&model).expect("irreducible");
        let nc = compute_b(&model, &traffic).expect("normalizable");
        let pf = closed_stationary(&model, &traffic, &nc).expect("small");
        let space = StateSpace::closed_simplex(model.nodes(), model.population().unwrap()).unwrap();
        let q = build_generator(&model, &space).unwrap();
        let oracle = solve_stationary(&q).unwrap();
        let product_form: Vec<f64> = space.states().iter().map(|n| pf.prob(n)).collect();
        worst_diff = worst_diff.max(max_abs_diff(&product_form, &oracle));
        worst_residual = worst_residual.max(global_balance_residual(&q, &product_form));
        cases.push(ClosedCase {
            model,
            traffic,
            space,
            q,
            oracle,
        });
    }
    let elapsed = start.elapsed();
    let pass = worst_diff < 1e-9 && worst_residual < 1e-10 && secs(elapsed) < 60.0;
    let summary = format!(
        "200 networks, max |pi - oracle| = {worst_diff:.2e} (< 1e-9), max balance residual = {worst_residual:.2e} (< 1e-10), {:.2} s (< 60 s)",
        secs(elapsed)
    );
    (Outcome { pass, summary }, cases)
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> (Outcome, Vec<OpenCase>) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let mut worst_tv = 0.0f64;
    let mut worst_partial = 0.0f64;
    let mut worst_tail = 0.0f64;
    let mut max_load = 0.0f64;
    let mut per_size = [0usize; 4];
    let mut max_states = 0;
    let mut cases = Vec::new();
    for _ in 0..50 {
        let model = random_open(&mut rng);
        let traffic = solve_open_traffic(&model).unwrap();
        let pf = open_stationary(&model, &traffic).unwrap();
        let caps = pf.caps_for_tail_mass(TAIL_MASS);
        worst_tail = worst_tail.max(pf.mass_outside(&caps));
        max_load = pf.rho().into_iter().flatten().fold(max_load, f64::max);
        per_size[model.nodes() - 1] += 1;
        let space = StateSpace::open_truncated(caps.clone()).unwrap();
        max_states = max_states.max(space.len());
        let q = build_generator(&model, &space).unwrap();
        let oracle = solve_stationary(&q).unwrap();

        let restricted = pf.restricted(&space);
        let mass: f64 = restricted.iter().sum();
        let tv = 0.5
            * restricted
                .iter()
                .zip(&oracle)
                .map(|(p, o)| (p / mass - o).abs())
                .sum::<f64>();
        worst_tv = worst_tv.max(tv);

        for _ in 0..100 {
            let n: Vec<usize> = caps.iter().map(|&c| rng.random_range(0..=c)).collect();
            let r = verify_partial_balance(&model, &pf, &StateVector(n)).unwrap();
            worst_partial = worst_partial.max(r.max());
        }
        cases.push(OpenCase {
            model,
            traffic,
            pf,
            space,
            q,
            oracle,
        });
    }
    let elapsed = start.elapsed();
    let pass =
        worst_tv < 1e-6 && worst_partial < 1e-10 && worst_tail < TAIL_MASS && secs(elapsed) < 120.0;
    let summary = format!(
        "50 networks (J=1..4: {per_size:?}, max load {max_load:.3}, up to {max_states} states), tail mass <= {worst_tail:.2e}, max TV = {worst_tv:.2e} (< 1e-6), max partial-balance residual = {worst_partial:.2e} (< 1e-10), {:.2} s (< 120 s)",
        secs(elapsed)
    );
    (Outcome { pass, summary }, cases)
}

// ---------------------------------------------------------------- criterion 3

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Log-uniform loads in [0.2, 5] whose pairwise relative gaps are at least 10%.
fn separated_loads(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..count)
            .map(|_| (rng.random_range(0.2f64.ln()..5.0f64.ln())).exp())
            .collect();
        let separated = v
            .iter()
            .enumerate()
            .all(|(i, a)| v[i + 1..].iter().all(|b| (a - b).abs() / a.max(*b) >= 0.1));
        if separated {
            return v;
        }
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    let mut notes = Vec::new();

    let anchor = LoadVector::new(vec![1.0, 2.0]).unwrap();
    let anchor_ok = [
        g_enumeration(&anchor, 2).unwrap().g,
        g_convolution(&anchor, 2).g,
        g_harrison_distinct(&anchor, 2).unwrap().g,
    ]
    .iter()
    .all(|g| rel(*g, 7.0) < 1e-12);
    let flat = LoadVector::new(vec![1.0, 1.0, 1.0]).unwrap();
    let flat_mult = Multiplicity::from_loads(&flat, DISTINCT_TOLERANCE);
    let flat_ok = rel(g_harrison_degenerate(&flat, 2, &flat_mult).unwrap().g, 6.0) < 1e-12
        && rel(g_convolution(&flat, 2).g, 6.0) < 1e-12;
    if !anchor_ok {
        notes.push("anchor (1,2),N=2 != 7".to_string());
    }
    if !flat_ok {
        notes.push("anchor (1,1,1),N=2 != 6".to_string());
    }

    let mut worst_distinct = 0.0f64;
    for _ in 0..500 {
        let j = rng.random_range(1..=6);
        let n = rng.random_range(1..=50);
        let loads = LoadVector::new(separated_loads(&mut rng, j)).unwrap();
        let conv = g_convolution(&loads, n).g;
        let enumerated = g_enumeration(&loads, n).unwrap().g;
        let harrison = g_harrison_distinct(&loads, n).unwrap().g;
        worst_distinct = worst_distinct
            .max(rel(enumerated, conv))
            .max(rel(harrison, conv));
    }

    let mut worst_degenerate = 0.0f64;
    for _ in 0..200 {
        // 1 to 4 separated values, at least one repeated, 2 to 6 nodes in total
        let groups = rng.random_range(1..=4);
        let values = separated_loads(&mut rng, groups);
        let mut loads: Vec<f64> = values.clone();
        let extra = rng.random_range(1..=(6 - groups).max(1));
        for _ in 0..extra {
            loads.push(values[rng.random_range(0..groups)]);
        }
        loads.shuffle(&mut rng);
        let n = rng.random_range(1..=50);
        let loads = LoadVector::new(loads).unwrap();
        let mult = Multiplicity::from_loads(&loads, DISTINCT_TOLERANCE);
        let conv = g_convolution(&loads, n).g;
        let degenerate = g_harrison_degenerate(&loads, n, &mult).unwrap().g;
        worst_degenerate = worst_degenerate.max(rel(degenerate, conv));
    }

    let pass = anchor_ok && flat_ok && worst_distinct < 1e-9 && worst_degenerate < 1e-9;
    let summary = format!(
        "anchors G(1,2;2)=7 and G(1,1,1;2)=6 {}, 500 distinct-load max rel err = {worst_distinct:.2e} (< 1e-9), 200 repeated-load max rel err = {worst_degenerate:.2e} (< 1e-9), {:.2} s{}",
        if anchor_ok && flat_ok { "ok" } else { "wrong" },
        secs(start.elapsed()),
        if notes.is_empty() { String::new() } else { format!(" [{}]", notes.join("; ")) }
    );
    Outcome { pass, summary }
}

// ---------------------------------------------------------------- criterion 4

#[derive(Default)]
struct ReversalStats {
    row_sum: f64,
    stationary: f64,
    formula: f64,
    compared: usize,
}

/// `|sum_n q'(m,n) - q(m)|` over all states.
fn reversed_row_sum(q: &Generator, rev: &Generator) -> f64 {
    (0..q.size())
        .map(|m| (rev.row(m).map(|(_, v)| v).sum::<f64>() + q.diag(m)).abs())
        .fold(0.0, f64::max)
}

#[allow(clippy::too_many_arguments)]
fn check_reversal(
    stats: &mut ReversalStats,
    model: &Network,
    traffic: &Traffic,
    space: &StateSpace,
    q: &Generator,
    oracle: &[f64],
    reference: &[f64],
    states: &[&StateVector],
) {
    let rev = reversed_generator(q, oracle).unwrap();
    stats.row_sum = stats.row_sum.max(reversed_row_sum(q, &rev));
    stats.stationary = stats
        .stationary
        .max(max_abs_diff(&solve_stationary(&rev).unwrap(), oracle));
    let matrix = reversed_generator(q, reference).unwrap();
    for n in states {
        let from = space.index_of(n).unwrap();
        for r in reversed_rates_formula(model, traffic, n) {
            let to = space
                .index_of(&r.target)
                .expect("interior neighbours stay in the box");
            let derived = matrix.get(from, to);
            let scale = r.rate.abs().max(derived.abs());
            if scale > 0.0 {
                stats.formula = stats.formula.max((r.rate - derived).abs() / scale);
            }
            stats.compared += 1;
        }
    }
}

fn criterion_4(closed: &[ClosedCase], open: &[OpenCase]) -> Outcome {
    let start = Instant::now();
    let mut stats = ReversalStats::default();
    for c in closed {
        let states: Vec<&StateVector> = c.space.states().iter().collect();
        check_reversal(
            &mut stats, &c.model, &c.traffic, &c.space, &c.q, &c.oracle, &c.oracle, &states,
        );
    }
    for c in open {
        // the truncation distorts the boundary, so formula rates are compared with the
        // reversal of the product form itself on interior states
        let reference = c.pf.restricted(&c.space);
        let states: Vec<&StateVector> = c
            .space
            .states()
            .iter()
            .filter(|n| c.space.is_interior(n))
            .collect();
        check_reversal(
            &mut stats, &c.model, &c.traffic, &c.space, &c.q, &c.oracle, &reference, &states,
        );
    }
    let pass = stats.row_sum < 1e-12 && stats.stationary < 1e-9 && stats.formula < 1e-9;
    let summary = format!(
        "{} instances, max reversed row-sum defect = {:.2e} (< 1e-12), max |stationary(Q') - pi| = {:.2e} (< 1e-9), max formula rel err = {:.2e} over {} rates (< 1e-9), {:.2} s",
        closed.len() + open.len(),
        stats.row_sum,
        stats.stationary,
        stats.formula,
        stats.compared,
        secs(start.elapsed())
    );
    Outcome { pass, summary }
}

// ---------------------------------------------------------------- criteria 5 and 6

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let tandem = Network::open(
        vec![vec![0.0, 1.0], vec![0.0, 0.0]],
        vec![ServiceRate::Constant(2.0), ServiceRate::Constant(4.0)],
        vec![1.0, 0.0],
    )
    .unwrap();
    let traffic = solve_open_traffic(&tandem).unwrap();
    let mut details = Vec::new();
    let mut passed = 0;
    for seed in [11, 22, 33, 44, 55] {
        let report = run(&tandem, &SimConfig::new(seed, 1e6)).unwrap();
        let v = departure_poisson_test(&report, &traffic, 1).unwrap();
        if v.pass {
            passed += 1;
        }
        details.push(format!(
            "seed {seed}: rate {:.4} disp {:.3} KS {:.5}/{:.5} {}",
            v.rate_estimate,
            v.dispersion_index,
            v.ks_statistic,
            v.ks_critical,
            if v.pass { "ok" } else { "reject" }
        ));
    }
    let elapsed = start.elapsed();
    let pass = passed >= 4 && secs(elapsed) < 300.0;
    Outcome {
        pass,
        summary: format!(
            "{passed}/5 seeds pass (>= 4), {:.2} s (< 300 s); {}",
            secs(elapsed),
            details.join("; ")
        ),
    }
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mm1 = Network::open(vec![vec![0.0]], vec![ServiceRate::Constant(2.0)], vec![1.0]).unwrap();
    let traffic = solve_open_traffic(&mm1).unwrap();
    let dist = ProductFormDistribution::Open(open_stationary(&mm1, &traffic).unwrap());
    let report = run(&mm1, &SimConfig::new(66, 1e6)).unwrap();
    let tv = empirical_vs_analytic(&report, &dist).per_node[0];
    // independent check of the analytic side: (1 - rho) rho^n at rho = 1/2
    let pmf = report.pmf(0);
    let direct = 0.5
        * (pmf
            .iter()
            .enumerate()
            .map(|(n, p)| (p - 0.5f64.powi(n as i32 + 1)).abs())
            .sum::<f64>()
            + 0.5f64.powi(pmf.len() as i32));
    let pass = tv < 0.01 && (tv - direct).abs() < 1e-12;
    Outcome {
        pass,
        summary: format!(
            "TV = {tv:.2e} (< 0.01), geometric reference TV = {direct:.2e}, {:.2} s",
            secs(start.elapsed())
        ),
    }
}

// ---------------------------------------------------------------- criterion 7

fn qnet(args: &[&str], out_dir: &Path) -> (i32, Vec<(String, Vec<u8>)>) {
    fs::create_dir_all(out_dir).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_qnet"))
        .args(
            args.iter()
                .map(|a| a.replace("{out}", out_dir.to_str().unwrap())),
        )
        .env_remove("QNET_GUARD_STATES")
        .status()
        .expect("binary runs");
    let mut files: Vec<(String, Vec<u8>)> = walk(out_dir);
    files.sort();
    (status.code().unwrap_or(-1), files)
}

fn walk(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push((
                path.strip_prefix(dir)
                    .unwrap_or(&path)
                    .display()
                    .to_string(),
                fs::read(&path).unwrap(),
            ));
        }
    }
    out
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let specs = Path::new(env!("CARGO_MANIFEST_DIR")).join("specs");
    let spec = |name: &str| specs.join(name).display().to_string();
    let (tandem, cycle, feedback, mm1) = (
        spec("tandem.json"),
        spec("two_cycle.json"),
        spec("feedback.json"),
        spec("mm1.json"),
    );
    let commands: Vec<Vec<&str>> = vec![
        vec!["--output", "{out}/r.json", "analyze", &tandem, "--oracle"],
        vec!["--output", "{out}/r.json", "analyze", &feedback, "--oracle"],
        vec![
            "--output",
            "{out}/r.csv",
            "--format",
            "csv",
            "analyze",
            &cycle,
            "--oracle",
        ],
        vec![
            "--output",
            "{out}/r.csv",
            "normconst",
            "--rho",
            "1,1,2",
            "--population",
            "2",
        ],
        vec![
            "--output",
            "{out}/r.json",
            "--format",
            "json",
            "normconst",
            &cycle,
        ],
        vec![
            "--output",
            "{out}/r.json",
            "simulate",
            &tandem,
            "--seed",
            "42",
            "--time",
            "1e5",
            "--tests",
            "departures,marginals,independence",
            "--plot-dir",
            "{out}/plots",
        ],
        vec![
            "--output",
            "{out}/r.json",
            "simulate",
            &cycle,
            "--seed",
            "7",
            "--time",
            "2e4",
            "--replications",
            "4",
            "--tests",
            "marginals",
            "--plot-dir",
            "{out}/plots",
        ],
        vec![
            "--output",
            "{out}/r.json",
            "simulate",
            &mm1,
            "--seed",
            "3",
            "--time",
            "1e4",
        ],
        vec!["--output", "{out}/r.json", "verify", &feedback],
        vec![
            "--output",
            "{out}/r.csv",
            "--format",
            "csv",
            "verify",
            &tandem,
            "--cap",
            "20",
        ],
    ];
    let tmp = tempfile::tempdir().unwrap();
    let mut mismatches = Vec::new();
    let mut files = 0;
    for (i, args) in commands.iter().enumerate() {
        let (code_a, out_a) = qnet(args, &tmp.path().join(format!("{i}a")));
        let (code_b, out_b) = qnet(args, &tmp.path().join(format!("{i}b")));
        files += out_a.len();
        if code_a != 0 || code_a != code_b || out_a.is_empty() || out_a != out_b {
            mismatches.push(format!("{} (exit {code_a}/{code_b})", args[3..].join(" ")));
        }
    }
    let pass = mismatches.is_empty();
    Outcome {
        pass,
        summary: format!(
            "{} commands run twice, {files} output files compared, {} mismatches, {:.2} s{}",
            commands.len(),
            mismatches.len(),
            secs(start.elapsed()),
            if pass {
                String::new()
            } else {
                format!(": {}", mismatches.join("; "))
            }
        ),
    }
}

fn main() {
    let (c1, closed) = criterion_1();
    report(1, "closed-form exactness", &c1);
    let (c2, open) = criterion_2();
    report(2, "open product-form convergence", &c2);
    let c3 = criterion_3();
    report(3, "normalizing constants", &c3);
    let c4 = criterion_4(&closed, &open);
    report(4, "reversed process", &c4);
    let c5 = criterion_5();
    report(5, "Poisson departures", &c5);
    let c6 = criterion_6();
    report(6, "M|M|1 marginal", &c6);
    let c7 = criterion_7();
    report(7, "CLI determinism", &c7);
    let failed = [&c1, &c2, &c3, &c4, &c5, &c6, &c7]
        .iter()
        .filter(|o| !o.pass)
        .count();
    println!("acceptance: {} of 7 criteria pass", 7 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
