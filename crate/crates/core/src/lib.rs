//! Distributed non-Bayesian learning over networks.
//!
//! Agents hold beliefs over a finite hypothesis set and repeatedly fuse their
//! neighbors' beliefs with private observations. The crate provides the update
//! rules (geometric pooling, the accelerated one-step-memory rule, and the
//! linear-pool and likelihood-sharing comparison rules), the graph and weight
//! machinery they run on, the information-theoretic quantities that say where
//! beliefs should concentrate and how fast, a seeded simulator, and builders
//! for the reference experiments.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod graphs;
pub mod rng;
pub mod rules;
pub mod scenarios;
pub mod simulator;
pub mod types;

pub use error::{Error, Result};
pub use types::{AgentSpec, BeliefState, HypothesisSet, LikelihoodModel, SignalAlphabet};
