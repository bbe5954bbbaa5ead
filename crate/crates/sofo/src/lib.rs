//! Online feedback optimization for networked systems whose agents may not
//! implement their commanded setpoints.
//!
//! A controller repeatedly sends a setpoint `u_n` to a physical system, but
//! each agent implements a randomly perturbed version `x_n = A_{n+1} u_n +
//! b_{n+1}` of it, and the controller only sees measurements of the
//! implemented inputs and the resulting outputs `y_n = C x_n + D r_n`. This
//! crate provides:
//!
//! - the system abstraction ([`model`]): compliance randomness, plant/sensor
//!   map, exogenous disturbances, measurement noise;
//! - strongly convex stage objectives with exact expected gradients over the
//!   compliance randomness ([`objective`]);
//! - exact Euclidean projections onto the feasible sets used by the update,
//!   including per-agent inverter regions ([`constraint`]);
//! - the measurement-driven projected-gradient loop in its stochastic
//!   (compliance-recovering) and deterministic (full-compliance) variants
//!   ([`engine`]);
//! - ground-truth optimizers, curvature/noise constants, and the mean-square
//!   tracking-error bounds built from them ([`analysis`]);
//! - a radial distribution feeder application: power flow, linearized voltage
//!   sensitivities, and the curtailment-vs-voltage experiment ([`grid`]);
//! - configuration, CSV/manifest reporting, and the packaged experiments
//!   behind the command-line harness ([`config`], [`report`], [`experiments`]).
//!
//! Everything is deterministic given a seed: randomness flows from
//! [`rng::RandomStream`], replications use derived substreams, and reductions
//! use fixed-order pairwise sums, so reruns reproduce results bit for bit.

pub mod analysis;
pub mod config;
pub mod constraint;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod model;
pub mod numeric;
pub mod objective;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
