use std::fmt;
use std::fs;
use std::path::Path;

use qnet::model::{validate, NetworkSpec, ValidationReport};
use qnet::{Error, Network};
use serde::Serialize;

/// Default state limit for dense generator solves.
pub const DENSE_GUARD: u128 = 20_000;
/// Default state limit for enumeration.
pub const ENUMERATION_GUARD: u128 = 10_000_000;
pub const GUARD_ENV: &str = "QNET_GUARD_STATES";

/// Process exit codes.
pub mod exit {
    pub const OTHER: i32 = 1;
    pub const INVALID: i32 = 2;
    pub const UNSTABLE: i32 = 3;
    pub const MALFORMED: i32 = 4;
    pub const SAMPLES: i32 = 5;
    pub const GUARD: i32 = 6;
}

/// A failed command: exit code, message for stderr, and an optional report for the output.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
    pub report: Option<String>,
}

impl Failure {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            report: None,
        }
    }

    pub fn with_report(mut self, report: String) -> Self {
        self.report = Some(report);
        self
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidModel(_) => exit::INVALID,
            Error::UnstableNode { .. } | Error::UnstableOpenModel { .. } => exit::UNSTABLE,
            Error::MalformedSpec(_)
            | Error::InvalidLoads
            | Error::DegenerateLoads { .. }
            | Error::DistinctLoads
            | Error::NonConstantRates(_)
            | Error::NotClosed
            | Error::CapacityTooSmall => exit::MALFORMED,
            Error::InsufficientSamples { .. } | Error::NotApplicable(_) => exit::SAMPLES,
            Error::StateSpaceTooLarge { .. } => exit::GUARD,
            _ => exit::OTHER,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(exit::OTHER, e.to_string())
    }
}

pub type CmdResult<T> = std::result::Result<T, Failure>;

/// Guard limit, overridden by the environment when set.
pub fn guard(default: u128) -> CmdResult<u128> {
    match std::env::var(GUARD_ENV) {
        Ok(v) => v
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|x| *x >= 1.0)
            .map(|x| x as u128)
            .ok_or_else(|| {
                Failure::new(
                    exit::MALFORMED,
                    format!("{GUARD_ENV}={v} is not a positive number"),
                )
            }),
        Err(_) => Ok(default),
    }
}

pub fn check_guard(states: u128, default: u128) -> CmdResult<()> {
    let limit = guard(default)?;
    if states > limit {
        return Err(Error::StateSpaceTooLarge { states, limit }.into());
    }
    Ok(())
}

#[derive(Serialize)]
pub struct ValidationView {
    pub valid: bool,
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl From<&ValidationReport> for ValidationView {
    fn from(r: &ValidationReport) -> Self {
        Self {
            valid: r.is_valid(),
            violations: r.violations.iter().map(ToString::to_string).collect(),
            warnings: r.warnings.iter().map(ToString::to_string).collect(),
        }
    }
}

#[derive(Serialize)]
struct InvalidReport<'a> {
    schema: &'static str,
    command: &'a str,
    model: &'a NetworkSpec,
    validation: ValidationView,
}

/// A parsed spec together with its validated model.
pub struct Loaded {
    pub spec: NetworkSpec,
    pub model: Network,
    pub validation: ValidationReport,
}

/// Reads and validates a spec; a validation failure carries the validation report.
pub fn load_spec(path: &Path, command: &str) -> CmdResult<Loaded> {
    let text = fs::read_to_string(path).map_err(|e| {
        Failure::new(
            exit::MALFORMED,
            format!("cannot read {}: {e}", path.display()),
        )
    })?;
    let spec = NetworkSpec::from_json(&text)?;
    let model: Network = spec.to_model()?;
    let validation = validate(&model);
    if !validation.is_valid() {
        let report = crate::output::to_json(&InvalidReport {
            schema: crate::output::SCHEMA,
            command,
            model: &spec,
            validation: (&validation).into(),
        });
        return Err(Failure::new(
            exit::INVALID,
            format!("invalid network model: {validation}"),
        )
        .with_report(report));
    }
    Ok(Loaded {
        spec,
        model,
        validation,
    })
}

/// Converts 0-based node indices to the 1-based numbering used in reports.
pub fn node_label(j: usize) -> usize {
    j + 1
}
