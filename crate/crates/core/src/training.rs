//! Augmented random search (V2 with top-b directions) for linear policies.
//!
//! Training episodes run without external pushes. Exploration noise follows
//! the usual recipe: Gaussian observation noise added after whitening and
//! Gaussian action noise added to the policy output; the environment clamps
//! the final action.

use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Disturbance, Environment, SectionOutcome};
use crate::error::{Error, Result};
use crate::fracdim::trajectory_mesh_dim;
use crate::mesh::{NormalizationStats, StateVector};
use crate::policy::{LinearPolicy, RunningStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArsConfig {
    pub step_size: f64,
    pub exploration_std: f64,
    pub directions: usize,
    pub top_directions: usize,
    pub episode_steps: usize,
    pub epochs: usize,
    pub seed: u64,
    pub action_noise_std: f64,
    pub obs_noise_std: f64,
    /// Base box size of the two-scale trajectory dimension.
    pub dim_d0: f64,
    pub dim_factor: f64,
}

impl Default for ArsConfig {
    fn default() -> Self {
        Self {
            step_size: 0.02,
            exploration_std: 0.025,
            directions: 50,
            top_directions: 20,
            episode_steps: 200,
            epochs: 100,
            seed: 0,
            action_noise_std: 0.01,
            obs_noise_std: 0.001,
            dim_d0: 1e-2,
            dim_factor: 1.5,
        }
    }
}

impl ArsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_directions == 0 || self.top_directions > self.directions {
            return Err(Error::Input(format!(
                "top directions {} must lie in 1..={}",
                self.top_directions, self.directions
            )));
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::Input("step size must be nonnegative".into()));
        }
        if !(self.exploration_std > 0.0 && self.exploration_std.is_finite()) {
            return Err(Error::Input("exploration std must be positive".into()));
        }
        if self.episode_steps == 0 {
            return Err(Error::Input("episodes need at least one step".into()));
        }
        if !(self.action_noise_std >= 0.0 && self.obs_noise_std >= 0.0) {
            return Err(Error::Input("noise stds must be nonnegative".into()));
        }
        if !(self.dim_d0 > 0.0 && self.dim_factor > 1.0) {
            return Err(Error::Input("dimension ladder needs d0 > 0 and factor > 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Standard,
    Fractal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub states: Vec<StateVector>,
    pub ret: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLevels {
    pub action_std: f64,
    pub obs_std: f64,
}

impl NoiseLevels {
    pub const NONE: NoiseLevels = NoiseLevels {
        action_std: 0.0,
        obs_std: 0.0,
    };
}

fn add_noise(values: &mut [f64], std: f64, rng: &mut dyn RngCore) {
    if std > 0.0 {
        for v in values {
            let z: f64 = StandardNormal.sample(rng);
            *v += std * z;
        }
    }
}

/// Rolls one episode from a perturbed nominal start without pushes.
///
/// The reward of a failing step counts toward the return, but no state is
/// recorded for it.
pub fn evaluate_episode(
    env: &dyn Environment,
    policy: &LinearPolicy,
    noise: NoiseLevels,
    rng: &mut dyn RngCore,
    episode_steps: usize,
) -> Result<EpisodeRecord> {
    if episode_steps == 0 {
        return Err(Error::Input("episodes need at least one step".into()));
    }
    let push = Disturbance::none();
    let mut state = env.perturbed_init(rng);
    let mut states = vec![state.clone()];
    let mut ret = 0.0;
    if !env.is_failure(&state) {
        for _ in 0..episode_steps {
            let mut obs = policy.obs_stats().whiten(&state);
            add_noise(&mut obs, noise.obs_std, rng);
            let mut action = policy.act_whitened(&obs);
            add_noise(&mut action, noise.action_std, rng);
            let t = env.step(&state, &action, &push)?;
            ret += t.reward;
            match t.outcome {
                SectionOutcome::Next(s) => {
                    state = s;
                    states.push(state.clone());
                }
                SectionOutcome::Failure => break,
            }
        }
    }
    Ok(EpisodeRecord {
        steps: states.len() - 1,
        states,
        ret,
    })
}

/// Trajectory dimension of an episode; a single-state record counts as 1.
pub fn episode_dimension(record: &EpisodeRecord, stats: &NormalizationStats, d0: f64, f: f64) -> Result<f64> {
    if record.states.len() < 2 {
        return Ok(1.0);
    }
    trajectory_mesh_dim(&record.states, stats, d0, f)
}

/// Episode return divided by its trajectory dimension.
pub fn fractal_return(record: &EpisodeRecord, stats: &NormalizationStats, d0: f64, f: f64) -> Result<f64> {
    Ok(record.ret / episode_dimension(record, stats, d0, f)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean plain return over the epoch's 2N episodes.
    pub mean_return: f64,
    pub fractal_return: f64,
    /// Trajectory dimension of the episode with the highest plain return.
    pub best_dim: f64,
    pub skipped: bool,
    /// Weights after this epoch's update, row-major.
    pub weights: Vec<f64>,
    pub obs_mean: Vec<f64>,
    pub obs_std: Vec<f64>,
}

impl EpochLog {
    /// Policy as it stood at the end of this epoch.
    pub fn policy(&self) -> Result<LinearPolicy> {
        let stats = NormalizationStats::new(self.obs_mean.clone(), self.obs_std.clone())?;
        let obs_dim = stats.dim();
        LinearPolicy::new(self.weights.chunks(obs_dim).map(<[f64]>::to_vec).collect(), stats)
    }
}

#[derive(Debug, Clone)]
pub struct TrainingResult {
    pub policy: LinearPolicy,
    pub log: Vec<EpochLog>,
}

struct DirectionResult {
    plus: f64,
    minus: f64,
    raw: [f64; 2],
    fractal: [f64; 2],
    dims: [f64; 2],
    states: RunningStats,
}

const STREAM_BITS: u32 = 32;

fn stream_rng(seed: u64, epoch: usize, lane: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << STREAM_BITS) | lane as u64);
    rng
}

pub fn ars_train(
    env: &dyn Environment,
    config: &ArsConfig,
    objective: Objective,
    init_policy: Option<&LinearPolicy>,
) -> Result<TrainingResult> {
    config.validate()?;
    let mut policy = match init_policy {
        Some(p) => {
            if p.obs_dim() != env.state_dim() || p.action_dim() != env.action_dim() {
                return Err(Error::DimensionMismatch {
                    expected: env.state_dim() * env.action_dim(),
                    got: p.obs_dim() * p.action_dim(),
                });
            }
            p.clone()
        }
        None => LinearPolicy::zeros(env.action_dim(), env.state_dim()),
    };
    let noise = NoiseLevels {
        action_std: config.action_noise_std,
        obs_std: config.obs_noise_std,
    };
    let n_weights = policy.weights().len();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut dir_rng = stream_rng(config.seed, epoch, 0);
        let deltas: Vec<Vec<f64>> = (0..config.directions)
            .map(|_| (0..n_weights).map(|_| dir_rng.sample(StandardNormal)).collect())
            .collect();

        let results: Vec<DirectionResult> = deltas
            .par_iter()
            .enumerate()
            .map(|(k, delta)| {
                let mut out = DirectionResult {
                    plus: 0.0,
                    minus: 0.0,
                    raw: [0.0; 2],
                    fractal: [0.0; 2],
                    dims: [1.0; 2],
                    states: RunningStats::new(env.state_dim()),
                };
                for (side, sign) in [1.0, -1.0].into_iter().enumerate() {
                    // both sides share one stream: same start and noise draws
                    let mut rng = stream_rng(config.seed, epoch, k + 1);
                    let candidate = policy.perturbed(delta, sign * config.exploration_std);
                    let rec = evaluate_episode(env, &candidate, noise, &mut rng, config.episode_steps)?;
                    let dim = episode_dimension(&rec, policy.obs_stats(), config.dim_d0, config.dim_factor)?;
                    rec.states.iter().for_each(|s| out.states.push(s));
                    out.raw[side] = rec.ret;
                    out.fractal[side] = rec.ret / dim;
                    out.dims[side] = dim;
                }
                let scored = match objective {
                    Objective::Standard => out.raw,
                    Objective::Fractal => out.fractal,
                };
                (out.plus, out.minus) = (scored[0], scored[1]);
                Ok(out)
            })
            .collect::<Result<_>>()?;

        let mut order: Vec<usize> = (0..results.len()).collect();
        let score = |k: usize| results[k].plus.max(results[k].minus);
        order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
        let mut top = order[..config.top_directions].to_vec();
        top.sort_unstable();

        let retained: Vec<f64> = top.iter().flat_map(|&k| [results[k].plus, results[k].minus]).collect();
        let mean = retained.iter().sum::<f64>() / retained.len() as f64;
        let sigma_r = (retained.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / retained.len() as f64).sqrt();
        let skipped = !(sigma_r > 0.0 && sigma_r.is_finite());
        if skipped {
            log::info!("epoch {epoch}: retained returns have zero spread, update skipped");
        } else {
            let scale = config.step_size / (config.top_directions as f64 * sigma_r);
            let mut step = vec![0.0; n_weights];
            for &k in &top {
                let diff = results[k].plus - results[k].minus;
                for (s, d) in step.iter_mut().zip(&deltas[k]) {
                    *s += diff * d;
                }
            }
            for (w, s) in policy.weights_mut().iter_mut().zip(&step) {
                *w += scale * s;
            }
            if policy.weights().iter().any(|w| !w.is_finite()) {
                return Err(Error::Domain(format!("weights became non-finite at epoch {epoch}")));
            }
        }

        let mut seen = RunningStats::new(env.state_dim());
        results.iter().for_each(|r| seen.merge(&r.states));
        policy.absorb_observations(&seen);

        let episodes = 2.0 * results.len() as f64;
        let mean_return = results.iter().map(|r| r.raw[0] + r.raw[1]).sum::<f64>() / episodes;
        let fractal_mean = results.iter().map(|r| r.fractal[0] + r.fractal[1]).sum::<f64>() / episodes;
        let best_dim = results
            .iter()
            .flat_map(|r| [(r.raw[0], r.dims[0]), (r.raw[1], r.dims[1])])
            .fold((f64::NEG_INFINITY, 1.0), |best, c| if c.0 > best.0 { c } else { best })
            .1;
        log.push(EpochLog {
            epoch,
            mean_return,
            fractal_return: fractal_mean,
            best_dim,
            skipped,
            weights: policy.weights().to_vec(),
            obs_mean: policy.obs_stats().mean().to_vec(),
            obs_std: policy.obs_stats().std().to_vec(),
        });
    }
    Ok(TrainingResult { policy, log })
}

/// Serialized policy with the running observation statistics needed to
/// resume training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub weights: Vec<Vec<f64>>,
    pub obs_mean: Vec<f64>,
    pub obs_std: Vec<f64>,
    pub obs_count: u64,
    pub obs_m2: Vec<f64>,
    pub config: ArsConfig,
    pub objective: Objective,
    pub epoch: usize,
    /// Where observation noise is injected during training.
    pub obs_noise_stage: String,
}

impl Checkpoint {
    pub fn new(policy: &LinearPolicy, config: &ArsConfig, objective: Objective, epoch: usize) -> Self {
        let running = policy.running_stats();
        Self {
            weights: policy.weight_rows(),
            obs_mean: policy.obs_stats().mean().to_vec(),
            obs_std: policy.obs_stats().std().to_vec(),
            obs_count: running.count,
            obs_m2: running.m2.clone(),
            config: config.clone(),
            objective,
            epoch,
            obs_noise_stage: "whitened".into(),
        }
    }

    pub fn policy(&self) -> Result<LinearPolicy> {
        let stats = NormalizationStats::new(self.obs_mean.clone(), self.obs_std.clone())?;
        let mut policy = LinearPolicy::new(self.weights.clone(), stats)?;
        if self.obs_count > 0 {
            policy.restore_running(RunningStats {
                count: self.obs_count,
                mean: self.obs_mean.clone(),
                m2: self.obs_m2.clone(),
            })?;
        }
        Ok(policy)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LogRow {
    epoch: usize,
    mean_return: f64,
    fractal_return: f64,
    best_dim: f64,
    skipped: bool,
}

pub fn write_log_csv(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in log {
        w.serialize(LogRow {
            epoch: e.epoch,
            mean_return: e.mean_return,
            fractal_return: e.fractal_return,
            best_dim: e.best_dim,
            skipped: e.skipped,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back `(epoch, mean_return, fractal_return, best_dim)` rows.
pub fn read_log_csv(path: &Path) -> Result<Vec<(usize, f64, f64, f64)>> {
    csv::Reader::from_path(path)?
        .deserialize::<LogRow>()
        .map(|r| {
            let r = r?;
            Ok((r.epoch, r.mean_return, r.fractal_return, r.best_dim))
        })
        .collect()
}
