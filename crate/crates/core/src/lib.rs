//! Simulation and numerical analysis of a spatial point process with
//! immigration, intrinsic mortality and pairwise competition.
//!
//! * [`model`]: window geometry, rate fields, competition kernel, configurations.
//! * [`combinatorics`]: exact Stirling numbers, Touchard polynomials, subset sums.
//! * [`surgailis`]: exact solution of the competition-free model.
//! * [`simulator`]: kinetic Monte Carlo with cell lists and seeded replicas.
//! * [`estimators`]: cell moments and correlation-function estimates.
//! * [`hierarchy`]: truncated correlation hierarchy with moment closures.
//! * [`bounds`]: closed-form norm bounds, existence times and moment envelopes.

pub mod bounds;
pub mod cli;
pub mod combinatorics;
pub mod config;
pub mod error;
pub mod estimators;
pub mod hierarchy;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod simulator;
pub mod surgailis;

pub use error::{Error, Result};
