//! Estimation of time-varying condom use in commercial sex from sparse
//! HIV prevalence surveys.
//!
//! The crate couples a six-compartment heterosexual HIV transmission model
//! with several stochastic/deterministic prior families for the condom-use
//! trajectory `CU(t)`, and fits them with a particle-marginal
//! Metropolis-Hastings sampler. An ensemble layer benchmarks the competing
//! trajectory models on synthetic data.

pub mod epi;
pub mod error;
pub mod eval;
pub mod grid;
pub mod inference;
pub mod io;
pub mod rng;
pub mod traj;

pub use error::{Error, Result};
