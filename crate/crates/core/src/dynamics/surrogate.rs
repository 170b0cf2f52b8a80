//! One-dimensional quadratic surrogate for exercising the trainer.
//!
//! The state flips sign every step (`x' = -x`) and the reward is
//! `-(a - gain * x)^2`, so with zero-mean whitening the optimal linear policy
//! weight is `gain * std`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{clamp_action, Disturbance, Environment, SectionOutcome, Transition};
use crate::error::{Error, Result};
use crate::mesh::StateVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSurrogate {
    pub gain: f64,
    pub nominal: f64,
    pub init_noise: f64,
}

impl Default for QuadraticSurrogate {
    fn default() -> Self {
        Self {
            gain: 0.5,
            nominal: 1.0,
            init_noise: 0.1,
        }
    }
}

impl QuadraticSurrogate {
    /// Optimal weight for observations whitened with standard deviation `std`
    /// and zero mean.
    pub fn optimal_weight(&self, std: f64) -> f64 {
        self.gain * std
    }
}

impl Environment for QuadraticSurrogate {
    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn nominal_init(&self) -> StateVector {
        StateVector::from_vec_unchecked(vec![self.nominal])
    }

    fn init_noise(&self) -> Vec<f64> {
        vec![self.init_noise]
    }

    fn is_failure(&self, _state: &[f64]) -> bool {
        false
    }

    fn step(&self, state: &StateVector, action: &[f64], _push: &Disturbance) -> Result<Transition> {
        if state.len() != 1 || action.len() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: state.len().max(action.len()) });
        }
        let x = state[0];
        let a = clamp_action(action[0]);
        let err = a - self.gain * x;
        Ok(Transition {
            outcome: SectionOutcome::Next(StateVector::from_vec_unchecked(vec![-x])),
            reward: -err * err,
        })
    }
}
