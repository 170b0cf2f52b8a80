use thiserror::Error;

use crate::reachability::MeshBuildReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state contains non-finite coordinates: {0:?}")]
    NonFinite(Vec<f64>),

    #[error("unknown mesh state id {0}")]
    UnknownId(usize),

    #[error("integration diverged after {steps} steps (cap {cap})")]
    Divergence { steps: usize, cap: usize },

    #[error("environment diverged from state {state:?} under disturbance #{disturbance}: {source}")]
    DivergenceAt {
        state: Vec<f64>,
        disturbance: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("every seed initial condition failed during settling")]
    EmptySeeds,

    #[error("mesh exceeded the cap of {cap} states")]
    MeshCapExceeded {
        cap: usize,
        partial: Box<MeshBuildReport>,
    },

    #[error("mesh entry {id} has {len} transitions, expected {expected}")]
    Arity { id: usize, len: usize, expected: usize },

    #[error("mesh entry {id} lists successor {target} which is not in the mesh")]
    Closure { id: usize, target: usize },

    #[error("power iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("dominant eigenvalue is not a simple real value (residual {residual:e} oscillates)")]
    UnsupportedSpectrum { residual: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("transient states {states:?} cannot reach the failure state")]
    RecurrentClass { states: Vec<usize> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
