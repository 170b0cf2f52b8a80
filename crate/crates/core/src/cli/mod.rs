//! Command-line front end: config loading, command dispatch and artifacts.

pub mod config;
pub mod pca;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::pointsets::fractal_pointset;
use crate::dynamics::slip::fixture_policy;
use crate::dynamics::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::fracdim::{box_counts, box_dimension, write_counts_csv, FitSummary};
use crate::markov::{
    build_transition_matrix, lambda2, mfpt_eigen, mfpt_exact, sparsity_pattern, transition_mass_cdf,
    uniform_start, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
use crate::mesh::{Mesh, NormalizationStats, StateVector};
use crate::policy::LinearPolicy;
use crate::reachability::{create_mesh, seed_states, BuildSummary, MeshOptions};
use crate::rollout::{mc_rollouts, write_trials_csv, RolloutStats};
use crate::training::{ars_train, write_log_csv, Checkpoint};

pub use config::RunConfig;
use config::{DimSource, PolicySource, StartSpec, StatsSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Train,
    Mesh,
    Analyze,
    Dim,
    Rollout,
    Pca,
    Sweep,
}

impl Command {
    /// Files written by the command, relative to the output directory.
    pub fn artifacts(self) -> &'static [&'static str] {
        match self {
            Command::Train => &["checkpoint.json", "training_log.csv"],
            Command::Mesh => &["mesh.json", "mesh_report.json", "seeds.json"],
            Command::Analyze => &["analysis.json", "sparsity.csv", "mass_cdf.csv", "transition.coo"],
            Command::Dim => &["dim_counts.csv", "dim_fit.json"],
            Command::Rollout => &["rollout_stats.json", "rollout_trials.csv"],
            Command::Pca => &["pca.csv", "pca_meta.json"],
            Command::Sweep => &["sweep.csv"],
        }
    }
}

/// Error tagged with the pipeline stage that produced it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl StageError {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "error": {
                "stage": self.stage,
                "kind": error_kind(&self.error),
                "message": self.error.to_string(),
            }
        })
    }
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Input(_) => "input",
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::NonFinite(_) => "non_finite",
        Error::UnknownId(_) => "unknown_id",
        Error::Divergence { .. } | Error::DivergenceAt { .. } => "divergence",
        Error::EmptySeeds => "empty_seeds",
        Error::MeshCapExceeded { .. } => "mesh_cap_exceeded",
        Error::Arity { .. } => "arity",
        Error::Closure { .. } => "closure",
        Error::NonConvergence { .. } => "non_convergence",
        Error::UnsupportedSpectrum { .. } => "unsupported_spectrum",
        Error::Domain(_) => "domain",
        Error::RecurrentClass { .. } => "recurrent_class",
        Error::Parse(_) => "parse",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

type StageResult<T> = std::result::Result<T, StageError>;

/// A loaded configuration with command-line overrides applied.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub out: PathBuf,
    pub force: bool,
}

impl Run {
    /// `seed` overrides both the master seed and the seed of a train block.
    pub fn new(mut config: RunConfig, out: Option<PathBuf>, seed: Option<u64>, force: bool) -> Self {
        if let Some(s) = seed {
            config.seed = s;
            if let PolicySource::Train { config: ars, .. } = &mut config.policy {
                ars.seed = s;
            }
        }
        let out = out.unwrap_or_else(|| config.output.clone());
        Self { config, out, force }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn preflight(&self, command: Command) -> Result<()> {
        std::fs::create_dir_all(&self.out)?;
        if !self.force {
            for name in command.artifacts() {
                let p = self.path(name);
                if p.exists() {
                    return Err(Error::Input(format!(
                        "{} exists; pass --force to overwrite",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn execute(&self, command: Command) -> StageResult<()> {
        self.preflight(command).stage("output")?;
        match command {
            Command::Train => self.train(),
            Command::Mesh => self.mesh(),
            Command::Analyze => self.analyze(),
            Command::Dim => self.dim(),
            Command::Rollout => self.rollout(),
            Command::Pca => self.pca(),
            Command::Sweep => self.sweep(),
        }
    }

    fn env(&self) -> StageResult<Box<dyn Environment>> {
        self.config.environment.build().stage("environment")
    }

    fn policy(&self, env: &dyn Environment) -> StageResult<LinearPolicy> {
        let policy = match &self.config.policy {
            PolicySource::Checkpoint { path } => Checkpoint::load(path).and_then(|c| c.policy()),
            PolicySource::Train { config, objective, init } => {
                let init = init.as_deref().map(|p| Checkpoint::load(p).and_then(|c| c.policy())).transpose();
                init.and_then(|i| ars_train(env, config, *objective, i.as_ref())).map(|r| r.policy)
            }
            PolicySource::Fixture {} => match self.config.environment {
                EnvSpec::Slip(_) => Ok(fixture_policy()),
                _ => Err(Error::Input("the fixture policy exists only for the hopper".into())),
            },
            PolicySource::Zero {} => Ok(LinearPolicy::zeros(env.action_dim(), env.state_dim())),
        }
        .stage("policy")?;
        if policy.obs_dim() != env.state_dim() || policy.action_dim() != env.action_dim() {
            return Err(Error::DimensionMismatch {
                expected: env.state_dim(),
                got: policy.obs_dim(),
            })
            .stage("policy");
        }
        Ok(policy)
    }

    fn seeds(&self, env: &dyn Environment, policy: &LinearPolicy) -> StageResult<Vec<StateVector>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        seed_states(env, policy, self.config.mesh.n_init, self.config.mesh.settle_steps, &mut rng).stage("seeds")
    }

    fn mesh_stats(&self, policy: &LinearPolicy, seeds: &[StateVector]) -> StageResult<NormalizationStats> {
        match self.config.mesh.stats {
            StatsSource::Policy => Ok(policy.obs_stats().clone()),
            StatsSource::Seeds => NormalizationStats::from_points(seeds).stage("seeds"),
            StatsSource::Identity => Ok(NormalizationStats::identity(policy.obs_dim())),
        }
    }

    fn mesh_path(&self) -> PathBuf {
        self.config.analysis.mesh_path.clone().unwrap_or_else(|| self.path("mesh.json"))
    }

    fn load_mesh(&self) -> StageResult<Mesh> {
        Mesh::load(&self.mesh_path()).stage("load_mesh")
    }

    fn train(&self) -> StageResult<()> {
        let PolicySource::Train { config, objective, init } = &self.config.policy else {
            return Err(Error::Input("train needs a policy block with source = train".into())).stage("config");
        };
        let env = self.env()?;
        let init = init.as_deref().map(Checkpoint::load).transpose().stage("policy")?;
        let start_epoch = init.as_ref().map_or(0, |c| c.epoch);
        let init = init.map(|c| c.policy()).transpose().stage("policy")?;
        let result = ars_train(env.as_ref(), config, *objective, init.as_ref()).stage("train")?;
        let epoch = start_epoch + config.epochs;
        Checkpoint::new(&result.policy, config, *objective, epoch)
            .save(&self.path("checkpoint.json"))
            .stage("write")?;
        write_log_csv(&self.path("training_log.csv"), &result.log).stage("write")
    }

    fn build_mesh(&self, box_size: f64) -> StageResult<(Vec<StateVector>, Result<crate::reachability::MeshBuildReport>)> {
        let env = self.env()?;
        let policy = self.policy(env.as_ref())?;
        let grid = self.config.disturbance.grid_set().stage("config")?;
        let seeds = self.seeds(env.as_ref(), &policy)?;
        let stats = self.mesh_stats(&policy, &seeds)?;
        let options = MeshOptions {
            box_size,
            max_states: self.config.mesh.max_states,
            threads: 0,
        };
        let report = create_mesh(env.as_ref(), &policy, &seeds, &grid, &stats, &options);
        Ok((seeds, report))
    }

    fn mesh(&self) -> StageResult<()> {
        let (seeds, report) = self.build_mesh(self.config.mesh.box_size)?;
        let report = report.stage("mesh")?;
        report.mesh.save(&self.path("mesh.json")).stage("write")?;
        let doc = MeshReportDoc {
            states: report.mesh.len(),
            box_size: report.mesh.box_size(),
            build: report.summary(),
        };
        write_json(&self.path("mesh_report.json"), &doc)?;
        let seeds: Vec<Vec<f64>> = seeds.into_iter().map(StateVector::into_inner).collect();
        write_json(&self.path("seeds.json"), &seeds)
    }

    fn start_ids(&self, mesh: &Mesh) -> StageResult<Vec<usize>> {
        match &self.config.analysis.start {
            StartSpec::Uniform => Ok((0..mesh.len()).collect()),
            StartSpec::Ids(ids) => Ok(ids.clone()),
            StartSpec::Seeds => {
                let seeds = read_seeds(&self.path("seeds.json")).stage("load_seeds")?;
                let mut ids = Vec::new();
                for s in &seeds {
                    match mesh.lookup(s.as_slice()).stage("load_seeds")? {
                        Some(id) => ids.push(id.index().expect("mesh ids are transient")),
                        None => {
                            return Err(Error::Input(format!("seed {:?} is not in the mesh", s.as_slice())))
                                .stage("load_seeds")
                        }
                    }
                }
                ids.sort_unstable();
                ids.dedup();
                Ok(ids)
            }
        }
    }

    fn analyze(&self) -> StageResult<()> {
        let mesh = self.load_mesh()?;
        mesh.arity().stage("validate")?;
        let t = build_transition_matrix(&mesh).stage("matrix")?;
        let start_ids = self.start_ids(&mesh)?;
        let start = uniform_start(mesh.len(), &start_ids).stage("start")?;
        let mut doc = AnalysisDoc {
            states: mesh.len(),
            nnz: t.nnz(),
            start_ids,
            lambda2: None,
            iterations: None,
            residual: None,
            mfpt_eigen: None,
            mfpt_exact: None,
            notes: Vec::new(),
        };
        match lambda2(&t, DEFAULT_TOL, DEFAULT_MAX_ITERS) {
            Ok(s) => {
                doc.lambda2 = Some(s.lambda2);
                doc.iterations = Some(s.iterations);
                doc.residual = Some(s.residual);
                match mfpt_eigen(s.lambda2) {
                    Ok(v) => doc.mfpt_eigen = Some(v),
                    Err(e) => doc.notes.push(format!("mfpt_eigen: {e}")),
                }
            }
            Err(e) => doc.notes.push(format!("lambda2: {e}")),
        }
        match mfpt_exact(&t, &start) {
            Ok(v) => doc.mfpt_exact = Some(v),
            Err(e) => doc.notes.push(format!("mfpt_exact: {e}")),
        }
        write_json(&self.path("analysis.json"), &doc)?;
        let pattern: Vec<(f64, f64)> = sparsity_pattern(&t).into_iter().map(|(r, c)| (r as f64, c as f64)).collect();
        write_pairs_csv(&self.path("sparsity.csv"), ["row", "col"], &pattern).stage("write")?;
        write_pairs_csv(&self.path("mass_cdf.csv"), ["state_fraction", "mass_fraction"], &transition_mass_cdf(&t))
            .stage("write")?;
        t.write_coo(&self.path("transition.coo")).stage("write")
    }

    fn dim(&self) -> StageResult<()> {
        let ladder = &self.config.analysis.ladder;
        let (points, stats) = match &self.config.analysis.dim_source {
            DimSource::PointSet { set, level } => {
                let pts = fractal_pointset(*set, *level).stage("dim")?;
                let stats = NormalizationStats::from_points(&pts).stage("dim")?;
                (pts, stats)
            }
            DimSource::Mesh {} => {
                let mesh = self.load_mesh()?;
                let pts: Vec<StateVector> = mesh.entries().iter().map(|e| e.representative.clone()).collect();
                (pts, mesh.stats().clone())
            }
        };
        let counts = box_counts(&points, ladder, &stats).stage("dim")?;
        let fit = box_dimension(&counts).stage("dim")?;
        write_counts_csv(&self.path("dim_counts.csv"), &counts).stage("write")?;
        write_json(&self.path("dim_fit.json"), &DimFitDoc { ladder: *ladder, fit: fit.summary() })
    }

    fn rollout(&self) -> StageResult<()> {
        let env = self.env()?;
        let policy = self.policy(env.as_ref())?;
        let sampler = self.config.disturbance.sampler().stage("config")?;
        let starts = match &self.config.analysis.start {
            StartSpec::Seeds => self.seeds(env.as_ref(), &policy)?,
            _ => {
                let mesh = self.load_mesh()?;
                self.start_ids(&mesh)?
                    .into_iter()
                    .map(|i| mesh.entries().get(i).map(|e| e.representative.clone()).ok_or(Error::UnknownId(i)))
                    .collect::<Result<_>>()
                    .stage("start")?
            }
        };
        let a = &self.config.analysis;
        let outcomes = mc_rollouts(env.as_ref(), &policy, &sampler, &starts, a.mc_trials, a.mc_max_steps, self.config.seed)
            .stage("rollout")?;
        let stats = RolloutStats::from_outcomes(&outcomes);
        if !stats.is_valid() {
            log::warn!("every rollout was censored at {} steps", a.mc_max_steps);
        }
        write_json(&self.path("rollout_stats.json"), &stats)?;
        write_trials_csv(&self.path("rollout_trials.csv"), &outcomes, starts.len()).stage("write")
    }

    fn pca(&self) -> StageResult<()> {
        let mesh = self.load_mesh()?;
        let proj = pca::pca_project(&mesh, self.config.analysis.pca_k).stage("pca")?;
        pca::write_projection_csv(&self.path("pca.csv"), &proj).stage("write")?;
        let meta = PcaMetaDoc {
            components: proj.components.clone(),
            explained_variance: proj.explained_variance.clone(),
            coordinates: "whitened mesh representatives, centered".into(),
            failure_flag: "transition list contains the failure state".into(),
        };
        write_json(&self.path("pca_meta.json"), &meta)
    }

    fn sweep(&self) -> StageResult<()> {
        if self.config.mesh.box_sizes.is_empty() {
            return Err(Error::Input("sweep needs mesh.box_sizes".into())).stage("config");
        }
        let mut rows = Vec::new();
        for &d in &self.config.mesh.box_sizes {
            let (_, report) = self.build_mesh(d)?;
            let row = match report {
                Ok(r) => SweepRow { box_size: d, states: r.mesh.len(), capped: false },
                Err(Error::MeshCapExceeded { partial, .. }) => {
                    SweepRow { box_size: d, states: partial.mesh.len(), capped: true }
                }
                Err(e) => return Err(e).stage("mesh"),
            };
            rows.push(row);
        }
        write_sweep_csv(&self.path("sweep.csv"), &rows).stage("write")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshReportDoc {
    pub states: usize,
    pub box_size: f64,
    pub build: BuildSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisDoc {
    pub states: usize,
    pub nnz: usize,
    pub start_ids: Vec<usize>,
    pub lambda2: Option<f64>,
    pub iterations: Option<usize>,
    pub residual: Option<f64>,
    pub mfpt_eigen: Option<f64>,
    pub mfpt_exact: Option<f64>,
    /// Reasons for any missing values.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimFitDoc {
    pub ladder: crate::fracdim::BoxLadder,
    pub fit: FitSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaMetaDoc {
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub coordinates: String,
    pub failure_flag: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub box_size: f64,
    pub states: usize,
    /// True when the build hit `max_states`; `states` is then a lower bound.
    pub capped: bool,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> StageResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from).stage("write")?;
    std::fs::write(path, text + "\n").map_err(Error::from).stage("write")
}

pub fn read_seeds(path: &Path) -> Result<Vec<StateVector>> {
    let raw: Vec<Vec<f64>> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    raw.into_iter().map(StateVector::new).collect()
}

pub fn write_pairs_csv(path: &Path, header: [&str; 2], rows: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for (a, b) in rows {
        w.write_record([format!("{a:?}"), format!("{b:?}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path)?;
    let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
    r.records()
        .map(|rec| {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Parse(format!("expected 2 fields, got {}", rec.len())));
            }
            Ok((parse(&rec[0])?, parse(&rec[1])?))
        })
        .collect()
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    csv::Reader::from_path(path)?
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}
