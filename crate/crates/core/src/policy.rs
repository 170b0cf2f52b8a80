//! Linear policies acting on whitened observations.

use serde::{Deserialize, Serialize};

use crate::dynamics::Policy;
use crate::error::{Error, Result};
use crate::mesh::NormalizationStats;

/// Running mean and sum of squared deviations (Welford / Chan merge).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
    }

    /// Sample statistics with std floored at [`NormalizationStats::STD_FLOOR`].
    /// `None` until two observations have been seen.
    pub fn to_stats(&self) -> Option<NormalizationStats> {
        if self.count < 2 {
            return None;
        }
        let denom = (self.count - 1) as f64;
        let std = self
            .m2
            .iter()
            .map(|s| (s / denom).sqrt().max(NormalizationStats::STD_FLOOR))
            .collect();
        NormalizationStats::new(self.mean.clone(), std).ok()
    }
}

/// `action = weights · whiten(observation)`, weights stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicy {
    action_dim: usize,
    obs_dim: usize,
    weights: Vec<f64>,
    stats: NormalizationStats,
    running: RunningStats,
}

impl LinearPolicy {
    pub fn zeros(action_dim: usize, obs_dim: usize) -> Self {
        Self {
            action_dim,
            obs_dim,
            weights: vec![0.0; action_dim * obs_dim],
            stats: NormalizationStats::identity(obs_dim),
            running: RunningStats::new(obs_dim),
        }
    }

    pub fn new(weights: Vec<Vec<f64>>, stats: NormalizationStats) -> Result<Self> {
        let action_dim = weights.len();
        let obs_dim = stats.dim();
        if action_dim == 0 {
            return Err(Error::Input("policy needs at least one action row".into()));
        }
        if let Some(row) = weights.iter().find(|r| r.len() != obs_dim) {
            return Err(Error::DimensionMismatch { expected: obs_dim, got: row.len() });
        }
        let weights: Vec<f64> = weights.into_iter().flatten().collect();
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Input("policy weights must be finite".into()));
        }
        Ok(Self {
            action_dim,
            obs_dim,
            weights,
            stats,
            running: RunningStats::new(obs_dim),
        })
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_rows(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.obs_dim).map(<[f64]>::to_vec).collect()
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn obs_stats(&self) -> &NormalizationStats {
        &self.stats
    }

    pub fn running_stats(&self) -> &RunningStats {
        &self.running
    }

    /// Folds a batch of observations into the running statistics and refreshes
    /// the whitening stats from them.
    pub fn absorb_observations(&mut self, batch: &RunningStats) {
        self.running.merge(batch);
        if let Some(stats) = self.running.to_stats() {
            self.stats = stats;
        }
    }

    pub(crate) fn restore_running(&mut self, running: RunningStats) -> Result<()> {
        if running.mean.len() != self.obs_dim || running.m2.len() != self.obs_dim {
            return Err(Error::DimensionMismatch { expected: self.obs_dim, got: running.mean.len() });
        }
        self.running = running;
        Ok(())
    }

    /// Weights with `delta` added, scaled by `scale`.
    pub fn perturbed(&self, delta: &[f64], scale: f64) -> LinearPolicy {
        let mut p = self.clone();
        for (w, d) in p.weights.iter_mut().zip(delta) {
            *w += scale * d;
        }
        p
    }

    /// Applies the weights to an already whitened observation.
    pub fn act_whitened(&self, obs: &[f64]) -> Vec<f64> {
        self.weights
            .chunks(self.obs_dim)
            .map(|row| row.iter().zip(obs).map(|(w, x)| w * x).sum())
            .collect()
    }
}

impl Policy for LinearPolicy {
    fn act(&self, state: &[f64]) -> Vec<f64> {
        self.act_whitened(&self.stats.whiten(state))
    }
}
