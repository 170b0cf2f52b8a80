//! Reachable-set meshing and stochastic stability analysis for disturbed,
//! policy-controlled hybrid systems.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod fracdim;
pub mod markov;
pub mod mesh;
pub mod policy;
pub mod reachability;
pub mod rollout;
pub mod training;

pub use error::{Error, Result};
