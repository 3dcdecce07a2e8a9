//! Brute-force continuous-time Markov chain machinery: state spaces, the
//! transition operators, generators, stationary solves, and time reversal.

mod generator;
mod reversed;
mod space;
mod stationary;

pub use generator::{build_generator, build_generator_closed, build_generator_open, Generator};
pub use reversed::{reversed_generator, reversed_rates_formula, ReversedRate};
pub use space::{binomial, Operator, SpaceKind, StateSpace, StateVector};
pub use stationary::{
    global_balance_residual, solve_stationary, solve_stationary_dense, solve_stationary_lu,
    solve_stationary_power, solve_stationary_with, StationaryOptions,
};
