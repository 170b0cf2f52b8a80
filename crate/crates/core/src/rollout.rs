//! Monte Carlo steps-to-failure under freshly sampled disturbances.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DisturbanceSampler, Environment, Policy, SectionOutcome};
use crate::error::{Error, Result};
use crate::mesh::StateVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutOutcome {
    /// Number of section steps up to and including the failing one.
    Failed(usize),
    Censored,
}

impl RolloutOutcome {
    pub fn steps(self) -> Option<usize> {
        match self {
            RolloutOutcome::Failed(n) => Some(n),
            RolloutOutcome::Censored => None,
        }
    }
}

/// Summary over a batch of rollouts. Mean and std cover uncensored trials
/// only and are `None` when every trial was censored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub trials: usize,
    pub mean_steps: Option<f64>,
    pub std_steps: Option<f64>,
    pub censored: usize,
}

impl RolloutStats {
    /// Sample statistics in trial order; a single uncensored trial has std 0.
    pub fn from_outcomes(outcomes: &[RolloutOutcome]) -> Self {
        let steps: Vec<f64> = outcomes.iter().filter_map(|o| o.steps()).map(|n| n as f64).collect();
        let censored = outcomes.len() - steps.len();
        let (mean_steps, std_steps) = match steps.len() {
            0 => (None, None),
            1 => (Some(steps[0]), Some(0.0)),
            n => {
                let mean = steps.iter().sum::<f64>() / n as f64;
                let var = steps.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (Some(mean), Some(var.sqrt()))
            }
        };
        Self {
            trials: outcomes.len(),
            mean_steps,
            std_steps,
            censored,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.mean_steps.is_some()
    }

    /// `std / sqrt(n)` over uncensored trials.
    pub fn standard_error(&self) -> Option<f64> {
        let n = self.trials - self.censored;
        self.std_steps.map(|s| s / (n as f64).sqrt())
    }
}

pub fn rollout_to_failure(
    env: &dyn Environment,
    policy: &dyn Policy,
    sampler: &DisturbanceSampler,
    start: &StateVector,
    max_steps: usize,
    rng: &mut dyn RngCore,
) -> Result<RolloutOutcome> {
    if max_steps == 0 {
        return Err(Error::Input("max_steps must be at least 1".into()));
    }
    if env.is_failure(start) {
        return Err(Error::Input(format!("rollout start {:?} is already failing", start.as_slice())));
    }
    let mut state = start.clone();
    for step in 1..=max_steps {
        let push = sampler.sample(rng);
        match env.section_step(&state, policy, &push)? {
            SectionOutcome::Failure => return Ok(RolloutOutcome::Failed(step)),
            SectionOutcome::Next(s) => state = s,
        }
    }
    Ok(RolloutOutcome::Censored)
}

/// Generator for trial `trial` of a batch seeded with `seed`.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Runs `trials` rollouts, trial `i` starting from `starts[i % len]` with its
/// own generator stream. Outcomes are returned in trial order.
pub fn mc_rollouts(
    env: &dyn Environment,
    policy: &dyn Policy,
    sampler: &DisturbanceSampler,
    starts: &[StateVector],
    trials: usize,
    max_steps: usize,
    seed: u64,
) -> Result<Vec<RolloutOutcome>> {
    if trials == 0 {
        return Err(Error::Input("trials must be at least 1".into()));
    }
    if starts.is_empty() {
        return Err(Error::Input("no rollout start states".into()));
    }
    sampler.validate()?;
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            rollout_to_failure(env, policy, sampler, &starts[i % starts.len()], max_steps, &mut rng)
        })
        .collect()
}

pub fn mc_mfpt(
    env: &dyn Environment,
    policy: &dyn Policy,
    sampler: &DisturbanceSampler,
    starts: &[StateVector],
    trials: usize,
    max_steps: usize,
    seed: u64,
) -> Result<RolloutStats> {
    let outcomes = mc_rollouts(env, policy, sampler, starts, trials, max_steps, seed)?;
    let stats = RolloutStats::from_outcomes(&outcomes);
    if !stats.is_valid() {
        log::warn!("all {trials} rollouts hit the {max_steps}-step cap; statistics are undefined");
    }
    Ok(stats)
}

#[derive(Debug, Serialize, Deserialize)]
struct TrialRow {
    trial: usize,
    start: usize,
    steps: Option<usize>,
    censored: bool,
}

/// One row per trial: `trial,start,steps,censored` (steps empty when censored).
pub fn write_trials_csv(path: &Path, outcomes: &[RolloutOutcome], n_starts: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (trial, o) in outcomes.iter().enumerate() {
        w.serialize(TrialRow {
            trial,
            start: trial % n_starts.max(1),
            steps: o.steps(),
            censored: o.steps().is_none(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trials_csv(path: &Path) -> Result<Vec<RolloutOutcome>> {
    csv::Reader::from_path(path)?
        .deserialize::<TrialRow>()
        .map(|r| {
            let r = r?;
            Ok(r.steps.map_or(RolloutOutcome::Censored, RolloutOutcome::Failed))
        })
        .collect()
}
