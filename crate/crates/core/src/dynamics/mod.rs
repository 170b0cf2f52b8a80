//! Environments stepped on a Poincaré section.
//!
//! Each call to [`Environment::step`] advances the system by one section
//! crossing (one hop for the hopper, one move for the walk) under a single
//! disturbance. Steps are pure functions of their arguments.

mod disturbance;
pub mod pointsets;
pub mod slip;
pub mod surrogate;
pub mod walk;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mesh::StateVector;

pub use disturbance::{disturbance_grid, Disturbance, DisturbanceSampler, DisturbanceSet};
pub use slip::{SlipHopper, SlipParams};
pub use surrogate::QuadraticSurrogate;
pub use walk::Walk1d;

/// Anything that maps an observed state to an action.
pub trait Policy: Sync {
    fn act(&self, state: &[f64]) -> Vec<f64>;
}

/// Policy producing a fixed action regardless of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPolicy(pub Vec<f64>);

impl Policy for ConstantPolicy {
    fn act(&self, _state: &[f64]) -> Vec<f64> {
        self.0.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SectionOutcome {
    Next(StateVector),
    Failure,
}

impl SectionOutcome {
    pub fn is_failure(&self) -> bool {
        matches!(self, SectionOutcome::Failure)
    }
}

/// Result of one section step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub outcome: SectionOutcome,
    pub reward: f64,
}

pub trait Environment: Send + Sync {
    fn state_dim(&self) -> usize;

    fn action_dim(&self) -> usize;

    fn nominal_init(&self) -> StateVector;

    /// Standard deviation of the Gaussian offset applied to each coordinate
    /// of the nominal initial condition at the start of an episode.
    fn init_noise(&self) -> Vec<f64> {
        vec![0.0; self.state_dim()]
    }

    fn is_failure(&self, state: &[f64]) -> bool;

    /// Advances one section under `push` with an explicit action.
    /// Actions are clamped to `[-1, 1]` by the environment.
    fn step(&self, state: &StateVector, action: &[f64], push: &Disturbance) -> Result<Transition>;

    fn section_step(
        &self,
        state: &StateVector,
        policy: &dyn Policy,
        push: &Disturbance,
    ) -> Result<SectionOutcome> {
        let action = policy.act(state);
        Ok(self.step(state, &action, push)?.outcome)
    }

    /// Nominal initial condition plus per-coordinate Gaussian noise.
    fn perturbed_init(&self, rng: &mut dyn RngCore) -> StateVector {
        let noise = self.init_noise();
        let nominal = self.nominal_init();
        if noise.iter().all(|&s| s == 0.0) {
            return nominal;
        }
        let coords = nominal
            .iter()
            .zip(&noise)
            .map(|(x, s)| {
                let z: f64 = StandardNormal.sample(rng);
                x + s * z
            })
            .collect();
        StateVector::from_vec_unchecked(coords)
    }
}

/// Built-in environment selected from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Slip(SlipParams),
    Walk1d { boundary: i64 },
    Quadratic(QuadraticSurrogate),
}

impl EnvSpec {
    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvSpec::Slip(p) => Box::new(SlipHopper::new(p.clone())?),
            EnvSpec::Walk1d { boundary } => Box::new(Walk1d::new(*boundary)?),
            EnvSpec::Quadratic(q) => Box::new(q.clone()),
        })
    }
}

pub(crate) fn clamp_action(a: f64) -> f64 {
    if a.is_nan() {
        0.0
    } else {
        a.clamp(-1.0, 1.0)
    }
}
