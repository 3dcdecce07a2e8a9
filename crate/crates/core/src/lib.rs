//! Exact analysis of single-class networks of exponential queues.
//!
//! Open (Jackson) and closed (Gordon–Newell) networks are described by a
//! [`NetworkModel`]. The analytical pipeline solves the traffic equations
//! ([`traffic`]), builds the product-form stationary law ([`productform`]) and,
//! for closed networks, the normalizing constant ([`normconst`]). The [`ctmc`]
//! module enumerates the state space and solves global balance by brute force,
//! and [`sim`] runs a seeded discrete-event simulation; both serve as
//! independent checks of the closed forms.
//!
//! The analytical modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`.

// Negated comparisons are used on purpose so that NaN fails every check.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ctmc;
pub mod error;
mod linalg;
pub mod model;
pub mod normconst;
pub mod productform;
pub mod scalar;
pub mod sim;
pub mod traffic;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Network = model::NetworkModel<f64>;
pub type Routing = model::RoutingMatrix<f64>;
pub type ServiceRate = model::ServiceRate<f64>;
pub type Traffic = traffic::TrafficSolution<f64>;
pub type Generator = ctmc::Generator<f64>;
pub type ProductForm = productform::ProductFormDistribution<f64>;
pub type Loads = normconst::LoadVector<f64>;
pub type NormConst = normconst::NormalizingConstant<f64>;

pub use model::NetworkModel;
