//! Breadth-first closure of the reachable set under a fixed policy and a
//! finite disturbance set, recording the deterministic transition map.

use std::time::Instant;

use log::warn;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DisturbanceSet, Environment, Policy, SectionOutcome};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, NormalizationStats, StateId, StateVector};

pub const DEFAULT_MAX_STATES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MeshBuildReport {
    pub mesh: Mesh,
    pub states_explored: usize,
    pub failures_recorded: usize,
    pub frontier_peak: usize,
    pub wall_time: f64,
}

/// The report fields written next to the mesh JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub states_explored: usize,
    pub failures_recorded: usize,
    pub frontier_peak: usize,
    pub wall_time: f64,
}

impl MeshBuildReport {
    pub fn summary(&self) -> BuildSummary {
        BuildSummary {
            states_explored: self.states_explored,
            failures_recorded: self.failures_recorded,
            frontier_peak: self.frontier_peak,
            wall_time: self.wall_time,
        }
    }
}

/// Settled apex states from `n_init` perturbed nominal initial conditions.
///
/// Each initial condition is stepped `settle_steps` times with no push.
/// Conditions that fail while settling are skipped with a warning.
pub fn seed_states(
    env: &dyn Environment,
    policy: &dyn Policy,
    n_init: usize,
    settle_steps: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<StateVector>> {
    if n_init == 0 {
        return Err(Error::Input("n_init must be at least 1".into()));
    }
    let calm = crate::dynamics::Disturbance::none();
    let mut seeds = Vec::with_capacity(n_init);
    'seeds: for i in 0..n_init {
        let mut state = env.perturbed_init(rng);
        if env.is_failure(&state) {
            warn!("seed {i} starts in a failure state; skipped");
            continue;
        }
        for step in 0..settle_steps {
            match env.section_step(&state, policy, &calm)? {
                SectionOutcome::Next(s) => state = s,
                SectionOutcome::Failure => {
                    warn!("seed {i} failed after {step} settling steps; skipped");
                    continue 'seeds;
                }
            }
        }
        seeds.push(state);
    }
    if seeds.is_empty() {
        return Err(Error::EmptySeeds);
    }
    Ok(seeds)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshOptions {
    pub box_size: f64,
    pub max_states: usize,
    /// Worker threads for the simulation fan-out; 0 uses the global pool.
    pub threads: usize,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self {
            box_size: 0.1,
            max_states: DEFAULT_MAX_STATES,
            threads: 0,
        }
    }
}

/// Builds the reachable mesh from `initial_states`.
///
/// Exploration is FIFO in discovery order with disturbances in set order.
/// Each frontier generation is simulated in parallel and merged serially in
/// (state id, disturbance index) order, so ids do not depend on the thread
/// count. Every entry is re-simulated from its representative state.
pub fn create_mesh(
    env: &dyn Environment,
    policy: &dyn Policy,
    initial_states: &[StateVector],
    disturbances: &DisturbanceSet,
    stats: &NormalizationStats,
    options: &MeshOptions,
) -> Result<MeshBuildReport> {
    if initial_states.is_empty() {
        return Err(Error::Input("at least one initial state is required".into()));
    }
    if options.max_states == 0 {
        return Err(Error::Input("max_states must be at least 1".into()));
    }
    if stats.dim() != env.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: env.state_dim(),
            got: stats.dim(),
        });
    }
    let run = || explore(env, policy, initial_states, disturbances, stats, options);
    if options.threads == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(options.threads)
            .build()
            .map_err(|e| Error::Input(format!("cannot build thread pool: {e}")))?
            .install(run)
    }
}

fn explore(
    env: &dyn Environment,
    policy: &dyn Policy,
    initial_states: &[StateVector],
    disturbances: &DisturbanceSet,
    stats: &NormalizationStats,
    options: &MeshOptions,
) -> Result<MeshBuildReport> {
    let started = Instant::now();
    let mut mesh = Mesh::new(stats.clone(), options.box_size)?;
    let mut frontier: Vec<StateId> = Vec::new();
    let mut failures = 0;

    for s in initial_states {
        if s.len() != env.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: env.state_dim(),
                got: s.len(),
            });
        }
        if env.is_failure(s) {
            warn!("initial state {:?} is a failure state; excluded", s.as_slice());
            continue;
        }
        let (id, new) = mesh.insert_or_get(s)?;
        if new {
            frontier.push(id);
        }
    }
    if frontier.is_empty() {
        return Err(Error::EmptySeeds);
    }
    let mut frontier_peak = frontier.len();
    let pushes = disturbances.pushes();

    let report = |mesh: Mesh, failures, frontier_peak| MeshBuildReport {
        states_explored: mesh.len(),
        mesh,
        failures_recorded: failures,
        frontier_peak,
        wall_time: started.elapsed().as_secs_f64(),
    };

    while !frontier.is_empty() {
        let jobs: Vec<(StateId, &StateVector)> = frontier
            .iter()
            .map(|&id| Ok((id, mesh.representative_state(id)?)))
            .collect::<Result<_>>()?;
        let outcomes: Vec<Vec<SectionOutcome>> = jobs
            .par_iter()
            .map(|(_, state)| {
                pushes
                    .iter()
                    .enumerate()
                    .map(|(k, push)| {
                        env.section_step(state, policy, push).map_err(|e| Error::DivergenceAt {
                            state: state.to_vec(),
                            disturbance: k,
                            source: Box::new(e),
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;

        let mut next = Vec::new();
        for (&id, results) in frontier.iter().zip(outcomes) {
            let mut list = Vec::with_capacity(results.len());
            for outcome in results {
                match outcome {
                    SectionOutcome::Failure => {
                        failures += 1;
                        list.push(StateId::FAILURE);
                    }
                    SectionOutcome::Next(s) => {
                        let (target, new) = mesh.insert_or_get(&s)?;
                        if new {
                            next.push(target);
                        }
                        list.push(target);
                    }
                }
            }
            mesh.entry_mut(id)?.transitions = list;
            if mesh.len() > options.max_states {
                return Err(Error::MeshCapExceeded {
                    cap: options.max_states,
                    partial: Box::new(report(mesh, failures, frontier_peak)),
                });
            }
        }
        frontier = next;
        frontier_peak = frontier_peak.max(frontier.len());
    }

    Ok(report(mesh, failures, frontier_peak))
}
