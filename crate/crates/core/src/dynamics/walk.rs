//! Absorbing random walk on `{1, …, K-1}`: a push with angle below π moves
//! right, anything else moves left. Position 0 reflects to 1; reaching K fails.

use std::f64::consts::PI;

use crate::dynamics::{Disturbance, Environment, SectionOutcome, Transition};
use crate::error::{Error, Result};
use crate::mesh::StateVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Walk1d {
    boundary: i64,
}

impl Walk1d {
    pub fn new(boundary: i64) -> Result<Self> {
        if boundary < 2 {
            return Err(Error::Input(format!("walk boundary must be >= 2, got {boundary}")));
        }
        Ok(Self { boundary })
    }

    pub fn boundary(&self) -> i64 {
        self.boundary
    }

    pub fn position(state: &[f64]) -> i64 {
        state[0].round() as i64
    }

    pub fn state(position: i64) -> StateVector {
        StateVector::from_vec_unchecked(vec![position as f64])
    }

    fn advance(&self, position: i64, push: &Disturbance) -> Option<i64> {
        let next = if push.angle < PI { position + 1 } else { position - 1 };
        match next {
            n if n >= self.boundary => None,
            n if n <= 0 => Some(1),
            n => Some(n),
        }
    }
}

impl Environment for Walk1d {
    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn nominal_init(&self) -> StateVector {
        Self::state(1)
    }

    fn is_failure(&self, state: &[f64]) -> bool {
        let p = Self::position(state);
        p <= 0 || p >= self.boundary
    }

    /// Reward is 1 for every move that does not fail.
    fn step(&self, state: &StateVector, _action: &[f64], push: &Disturbance) -> Result<Transition> {
        if state.len() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: state.len() });
        }
        Ok(match self.advance(Self::position(state), push) {
            Some(p) => Transition {
                outcome: SectionOutcome::Next(Self::state(p)),
                reward: 1.0,
            },
            None => Transition {
                outcome: SectionOutcome::Failure,
                reward: 0.0,
            },
        })
    }
}
