use serde::Serialize;

use super::SimulationReport;
use crate::error::{Error, Result};
use crate::productform::ProductFormDistribution;
use crate::traffic::TrafficSolution;

/// Significance level of every hypothesis test.
pub const KS_SIGNIFICANCE: f64 = 0.01;
/// Allowed relative error of the exit-rate estimate.
pub const RATE_TOLERANCE: f64 = 0.03;
/// Accepted range of the windowed-count dispersion index.
pub const DISPERSION_RANGE: (f64, f64) = (0.9, 1.1);
pub const MIN_EXIT_SAMPLES: usize = 1000;
const MIN_PROBES: usize = 100;

/// One-sample Kolmogorov–Smirnov statistic `sup |F_n - F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        let above = (i as f64 + 1.0) / n - f;
        let below = f - i as f64 / n;
        d.max(above).max(below)
    })
}

/// Asymptotic critical value `sqrt(-ln(a/2)/2) / sqrt(n)`.
pub fn ks_critical_value(n: usize, significance: f64) -> f64 {
    (-(significance / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Variance-to-mean ratio of event counts.
pub fn dispersion_index(counts: &[u64]) -> f64 {
    let k = counts.len() as f64;
    let mean = counts.iter().sum::<u64>() as f64 / k;
    let var = counts
        .iter()
        .map(|&c| (c as f64 - mean).powi(2))
        .sum::<f64>()
        / (k - 1.0);
    var / mean
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DepartureVerdict {
    pub node: usize,
    pub expected_rate: f64,
    pub rate_estimate: f64,
    pub rate_relative_error: f64,
    pub dispersion_index: f64,
    pub ks_statistic: f64,
    pub ks_critical: f64,
    pub samples: usize,
    pub windows: usize,
    pub rate_ok: bool,
    pub dispersion_ok: bool,
    pub ks_ok: bool,
    pub pass: bool,
}

/// Checks that exits from `node` form a Poisson stream of rate `alpha_k p(k)`.
pub fn departure_poisson_test(
    report: &SimulationReport,
    traffic: &TrafficSolution<f64>,
    node: usize,
) -> Result<DepartureVerdict> {
    if !report.open {
        return Err(Error::NotApplicable("closed network has no exits".into()));
    }
    let exit = report.exit_probabilities[node];
    if !(exit > 0.0) {
        return Err(Error::NotApplicable(format!(
            "node {} has no exit stream",
            node + 1
        )));
    }
    let count = report.exit_count(node);
    if count < MIN_EXIT_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_EXIT_SAMPLES,
            observed: count,
        });
    }
    let expected = traffic.alpha[node] * exit;
    let rate = count as f64 / report.total_time();
    let rel = (rate - expected).abs() / expected;
    let counts = report.window_counts(node);
    let dispersion = dispersion_index(&counts);
    let gaps = report.interdeparture_times(node);
    let ks = ks_statistic(&gaps, |x| 1.0 - (-expected * x).exp());
    let critical = ks_critical_value(gaps.len(), KS_SIGNIFICANCE);
    let rate_ok = rel <= RATE_TOLERANCE;
    let dispersion_ok = (DISPERSION_RANGE.0..=DISPERSION_RANGE.1).contains(&dispersion);
    let ks_ok = ks < critical;
    Ok(DepartureVerdict {
        node,
        expected_rate: expected,
        rate_estimate: rate,
        rate_relative_error: rel,
        dispersion_index: dispersion,
        ks_statistic: ks,
        ks_critical: critical,
        samples: gaps.len(),
        windows: counts.len(),
        rate_ok,
        dispersion_ok,
        ks_ok,
        pass: rate_ok && dispersion_ok && ks_ok,
    })
}

/// Consistency check (not a verification) of exits before `t0` being independent of the state at `t0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndependenceVerdict {
    pub node: usize,
    pub correlation: f64,
    pub samples: usize,
    pub threshold: f64,
    pub consistent: bool,
    pub label: &'static str,
}

/// Sample correlation between exits from `node` in `(t0 - w, t0]` and the queue length at `t0`.
pub fn departure_state_independence_smoketest(
    report: &SimulationReport,
    node: usize,
) -> Result<IndependenceVerdict> {
    if !report.open {
        return Err(Error::NotApplicable("closed network has no exits".into()));
    }
    let pairs: Vec<(f64, f64)> = report
        .probes()
        .map(|p| (p.recent_exits[node] as f64, p.state[node] as f64))
        .collect();
    if pairs.len() < MIN_PROBES {
        return Err(Error::InsufficientSamples {
            needed: MIN_PROBES,
            observed: pairs.len(),
        });
    }
    let k = pairs.len() as f64;
    let (mx, my) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x / k, b + y / k));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    let correlation = if sxx > 0.0 && syy > 0.0 {
        sxy / (sxx * syy).sqrt()
    } else {
        0.0
    };
    let threshold = 3.0 / k.sqrt();
    Ok(IndependenceVerdict {
        node,
        correlation,
        samples: pairs.len(),
        threshold,
        consistent: correlation.abs() < threshold,
        label: "consistency check",
    })
}

/// Total-variation distances between empirical and analytic laws.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TvReport {
    pub per_node: Vec<f64>,
    pub joint: Option<f64>,
}

fn tv(empirical: &[f64], analytic: impl Fn(usize) -> f64, analytic_rest: f64) -> f64 {
    let diff: f64 = empirical
        .iter()
        .enumerate()
        .map(|(n, e)| (e - analytic(n)).abs())
        .sum();
    0.5 * (diff + analytic_rest.max(0.0))
}

pub fn empirical_vs_analytic(
    report: &SimulationReport,
    dist: &ProductFormDistribution<f64>,
) -> TvReport {
    match dist {
        ProductFormDistribution::Open(d) => {
            let per_node = d
                .marginals
                .iter()
                .enumerate()
                .map(|(j, m)| {
                    let e = report.pmf(j);
                    let rest = if e.is_empty() {
                        1.0
                    } else {
                        m.tail_mass(e.len() - 1)
                    };
                    tv(&e, |n| m.pmf(n), rest)
                })
                .collect();
            let joint = report.joint_pmf().map(|joint| {
                let covered: f64 = joint.iter().map(|(s, _)| d.prob(s)).sum();
                let diff: f64 = joint.iter().map(|(s, p)| (p - d.prob(s)).abs()).sum();
                0.5 * (diff + (1.0 - covered).max(0.0))
            });
            TvReport { per_node, joint }
        }
        ProductFormDistribution::Closed(d) => {
            let per_node = (0..report.nodes)
                .map(|j| {
                    let a = d.marginal(j);
                    let e = report.pmf(j);
                    let covered: f64 = a.iter().take(e.len()).sum();
                    tv(&e, |n| a.get(n).copied().unwrap_or(0.0), 1.0 - covered)
                })
                .collect();
            let joint = report.joint_pmf().map(|joint| {
                let covered: f64 = joint.iter().map(|(s, _)| d.prob(s)).sum();
                let diff: f64 = joint.iter().map(|(s, p)| (p - d.prob(s)).abs()).sum();
                0.5 * (diff + (1.0 - covered).max(0.0))
            });
            TvReport { per_node, joint }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_statistic_of_perfect_grid_is_one_over_n() {
        // uniform quantiles (i - 0.5)/n give D = 0.5/n
        let n = 100;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.005).abs() < 1e-12);
    }

    #[test]
    fn ks_critical_matches_tabulated_constant() {
        // asymptotic K_{0.99} = 1.6276
        assert!((ks_critical_value(1, 0.01) - 1.62762).abs() < 1e-4);
        assert!((ks_critical_value(10_000, 0.01) - 0.0162762).abs() < 1e-6);
    }

    #[test]
    fn dispersion_of_constant_counts_is_zero() {
        assert_eq!(dispersion_index(&[3, 3, 3, 3]), 0.0);
        // counts 0,2 -> mean 1, sample variance 2
        assert!((dispersion_index(&[0, 2]) - 2.0).abs() < 1e-15);
    }
}
