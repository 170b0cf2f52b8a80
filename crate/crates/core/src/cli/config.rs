//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::pointsets::PointSetKind;
use crate::dynamics::{disturbance_grid, DisturbanceSampler, DisturbanceSet, EnvSpec};
use crate::error::{Error, Result};
use crate::fracdim::BoxLadder;
use crate::reachability::DEFAULT_MAX_STATES;
use crate::training::{ArsConfig, Objective};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub environment: EnvSpec,
    pub policy: PolicySource,
    #[serde(default)]
    pub disturbance: DisturbanceConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.environment.build()?;
        if let PolicySource::Train { config, .. } = &self.policy {
            config.validate()?;
        }
        if let Some(s) = &self.disturbance.sampler {
            s.validate()?;
        }
        if let Some(g) = &self.disturbance.grid {
            g.build()?;
        }
        if !(self.mesh.box_size > 0.0 && self.mesh.box_size.is_finite()) {
            return Err(Error::Input(format!("mesh box size {} must be positive", self.mesh.box_size)));
        }
        if let Some(bad) = self.mesh.box_sizes.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::Input(format!("sweep box size {bad} must be positive")));
        }
        self.analysis.ladder.validate()?;
        Ok(())
    }
}

/// Where the policy under analysis comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySource {
    Checkpoint {
        path: PathBuf,
    },
    /// Trains in-process; `init` warm-starts from a checkpoint.
    Train {
        #[serde(default)]
        config: ArsConfig,
        #[serde(default = "standard")]
        objective: Objective,
        #[serde(default)]
        init: Option<PathBuf>,
    },
    /// Reference gait policy of the hopper.
    Fixture {},
    /// All-zero weights with identity whitening.
    Zero {},
}

fn standard() -> Objective {
    Objective::Standard
}

/// Finite push grid for meshing and a sampler for Monte Carlo rollouts.
/// Each command uses exactly one of them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub sampler: Option<DisturbanceSampler>,
}

impl DisturbanceConfig {
    pub fn grid_set(&self) -> Result<DisturbanceSet> {
        self.grid
            .as_ref()
            .ok_or_else(|| Error::Input("this command needs a disturbance grid".into()))?
            .build()
    }

    pub fn sampler(&self) -> Result<DisturbanceSampler> {
        self.sampler
            .ok_or_else(|| Error::Input("this command needs a disturbance sampler".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub count: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub duration: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<DisturbanceSet> {
        disturbance_grid(self.count, self.f_min, self.f_max, self.duration)
    }
}

/// Whitening used to key the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsSource {
    /// The policy's observation statistics.
    Policy,
    /// Statistics of the settled seed states.
    Seeds,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub box_size: f64,
    /// Box sizes visited by `sweep`.
    pub box_sizes: Vec<f64>,
    pub max_states: usize,
    pub n_init: usize,
    pub settle_steps: usize,
    pub stats: StatsSource,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            box_size: 0.1,
            box_sizes: vec![0.4, 0.3, 0.2, 0.1],
            max_states: DEFAULT_MAX_STATES,
            n_init: 10,
            settle_steps: 20,
            stats: StatsSource::Policy,
        }
    }
}

/// Start distribution for absorption times and rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartSpec {
    /// Mesh states holding the settled seeds.
    Seeds,
    /// Every transient mesh state.
    Uniform,
    Ids(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DimSource {
    PointSet { set: PointSetKind, level: u32 },
    /// Representatives of the mesh in the output directory.
    Mesh {},
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Mesh to analyze; defaults to `mesh.json` in the output directory.
    pub mesh_path: Option<PathBuf>,
    pub ladder: BoxLadder,
    pub dim_source: DimSource,
    pub mc_trials: usize,
    pub mc_max_steps: usize,
    pub start: StartSpec,
    pub pca_k: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            mesh_path: None,
            ladder: BoxLadder {
                d0: 0.25,
                factor: 2.0,
                levels: BoxLadder::DEFAULT_LEVELS,
            },
            dim_source: DimSource::Mesh {},
            mc_trials: 10_000,
            mc_max_steps: 100_000,
            start: StartSpec::Seeds,
            pca_k: 3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_json(
            r#"{"environment": {"kind": "walk1d", "boundary": 5}, "policy": {"source": "zero"}}"#,
        )
        .unwrap();
        assert_eq!(c.mesh, MeshConfig::default());
        assert_eq!(c.output, PathBuf::from("out"));
        assert!(c.disturbance.grid_set().is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let c = RunConfig {
            environment: EnvSpec::Slip(Default::default()),
            policy: PolicySource::Train {
                config: ArsConfig::default(),
                objective: Objective::Fractal,
                init: Some("a.json".into()),
            },
            disturbance: DisturbanceConfig {
                grid: Some(GridSpec { count: 3, f_min: -1.0, f_max: 1.0, duration: 0.01 }),
                sampler: Some(DisturbanceSampler::new(0.0, 2.0, 0.01).unwrap()),
            },
            mesh: MeshConfig::default(),
            analysis: AnalysisConfig {
                dim_source: DimSource::PointSet { set: PointSetKind::Koch, level: 8 },
                start: StartSpec::Ids(vec![0, 2]),
                ..Default::default()
            },
            output: "runs/a".into(),
            seed: 9,
        };
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
    }

    #[test]
    fn rejects_two_policy_sources_and_bad_values() {
        let two = r#"{"environment": {"kind": "walk1d", "boundary": 5},
            "policy": {"source": "zero", "path": "x.json"}}"#;
        assert!(RunConfig::from_json(two).is_err());
        let bad_box = r#"{"environment": {"kind": "walk1d", "boundary": 5},
            "policy": {"source": "zero"}, "mesh": {"box_size": 0}}"#;
        assert!(RunConfig::from_json(bad_box).is_err());
        let bad_env = r#"{"environment": {"kind": "walk1d", "boundary": 1}, "policy": {"source": "zero"}}"#;
        assert!(RunConfig::from_json(bad_env).is_err());
    }
}
