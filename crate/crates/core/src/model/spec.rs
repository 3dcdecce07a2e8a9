//! JSON network spec file.
//!
//! ```json
//! {"nodes": 2,
//!  "routing": [[0, 1], [0, 0]],
//!  "service": [{"type": "constant", "rate": 2}, {"type": "table", "rates": [1, 4]}],
//!  "kind": {"open": {"nu": [1, 0]}}}
//! ```
//!
//! `exit` is optional and derived from the routing rows when absent.

use serde::{Deserialize, Serialize};

use super::{NetworkKind, NetworkModel, RoutingMatrix, ServiceRate};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub nodes: usize,
    pub routing: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit: Option<Vec<f64>>,
    pub service: Vec<ServiceSpec>,
    pub kind: KindSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ServiceSpec {
    Constant { rate: f64 },
    Table { rates: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum KindSpec {
    Open { nu: Vec<f64> },
    Closed { population: usize },
}

fn cast<S: Scalar>(values: &[f64]) -> Vec<S> {
    values.iter().map(|&v| S::lit(v)).collect()
}

impl NetworkSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::MalformedSpec(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Converts the file representation into a model (structure checked, invariants not validated).
    pub fn to_model<S: Scalar>(&self) -> Result<NetworkModel<S>> {
        if self.routing.len() != self.nodes {
            return Err(Error::MalformedSpec(format!(
                "\"nodes\" is {} but routing has {} rows",
                self.nodes,
                self.routing.len()
            )));
        }
        let rows: Vec<Vec<S>> = self.routing.iter().map(|r| cast(r)).collect();
        let routing = match &self.exit {
            Some(exit) => RoutingMatrix::with_exit(rows, cast(exit))?,
            None => RoutingMatrix::new(rows)?,
        };
        let service = self
            .service
            .iter()
            .map(|s| match s {
                ServiceSpec::Constant { rate } => ServiceRate::Constant(S::lit(*rate)),
                ServiceSpec::Table { rates } => ServiceRate::Table(cast(rates)),
            })
            .collect();
        let kind = match &self.kind {
            KindSpec::Open { nu } => NetworkKind::Open { arrivals: cast(nu) },
            KindSpec::Closed { population } => NetworkKind::Closed {
                population: *population,
            },
        };
        NetworkModel::new(routing, service, kind)
    }

    pub fn from_model<S: Scalar>(model: &NetworkModel<S>) -> Self {
        let to_f64 = |v: &[S]| v.iter().map(|x| x.as_f64()).collect::<Vec<f64>>();
        let routing = model.routing();
        NetworkSpec {
            nodes: model.nodes(),
            routing: (0..model.nodes()).map(|j| to_f64(routing.row(j))).collect(),
            exit: Some(to_f64(routing.exits())),
            service: model
                .service()
                .iter()
                .map(|s| match s {
                    ServiceRate::Constant(mu) => ServiceSpec::Constant { rate: mu.as_f64() },
                    ServiceRate::Table(rates) => ServiceSpec::Table {
                        rates: to_f64(rates),
                    },
                })
                .collect(),
            kind: match model.kind() {
                NetworkKind::Open { arrivals } => KindSpec::Open {
                    nu: to_f64(arrivals),
                },
                NetworkKind::Closed { population } => KindSpec::Closed {
                    population: *population,
                },
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TANDEM: &str = r#"{"nodes": 2, "routing": [[0, 1], [0, 0]],
        "service": [{"type": "constant", "rate": 2}, {"type": "table", "rates": [1, 4]}],
        "kind": {"open": {"nu": [1, 0]}}}"#;

    #[test]
    fn parses_open_spec_and_derives_exit() {
        let spec = NetworkSpec::from_json(TANDEM).unwrap();
        let model: NetworkModel<f64> = spec.to_model().unwrap();
        assert_eq!(model.routing().exits(), &[0.0, 1.0]);
        assert_eq!(model.mu(1, 5), 4.0);
        assert_eq!(model.arrivals(), Some(&[1.0, 0.0][..]));
    }

    #[test]
    fn parses_closed_spec_with_explicit_exit() {
        let text = r#"{"nodes": 2, "routing": [[0, 1], [1, 0]], "exit": [0, 0],
            "service": [{"type": "constant", "rate": 1}, {"type": "constant", "rate": 2}],
            "kind": {"closed": {"population": 3}}}"#;
        let model: NetworkModel<f32> = NetworkSpec::from_json(text).unwrap().to_model().unwrap();
        assert_eq!(model.population(), Some(3));
    }

    #[test]
    fn malformed_specs_are_rejected() {
        assert!(NetworkSpec::from_json("{").is_err());
        assert!(NetworkSpec::from_json(r#"{"nodes": 1}"#).is_err());
        let wrong_count = TANDEM.replace("\"nodes\": 2", "\"nodes\": 3");
        let spec = NetworkSpec::from_json(&wrong_count).unwrap();
        assert!(matches!(
            spec.to_model::<f64>(),
            Err(Error::MalformedSpec(_))
        ));
    }

    #[test]
    fn model_round_trips_through_spec() {
        let spec = NetworkSpec::from_json(TANDEM).unwrap();
        let model: NetworkModel<f64> = spec.to_model().unwrap();
        let echoed = NetworkSpec::from_json(&NetworkSpec::from_model(&model).to_json()).unwrap();
        assert_eq!(echoed.to_model::<f64>().unwrap(), model);
    }
}
