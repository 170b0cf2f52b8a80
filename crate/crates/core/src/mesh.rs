//! Uniform hypercube meshing of whitened states.
//!
//! A state `s` is whitened with per-coordinate mean and standard deviation and
//! then snapped to the integer lattice `round(((s - mean) / std) / box_size)`.
//! The lattice vector is the hash key; box membership is a single lookup.

use std::collections::HashMap;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in an environment's continuous state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite(coords));
        }
        Ok(Self(coords))
    }

    /// Skips the finiteness check. Callers must uphold it.
    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|c| c.is_finite()));
        Self(coords)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Per-coordinate whitening statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl NormalizationStats {
    /// Smallest standard deviation accepted when stats are estimated from data.
    pub const STD_FLOOR: f64 = 1e-8;

    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: std.len(),
            });
        }
        if mean.is_empty() {
            return Err(Error::Input("normalization stats must be non-empty".into()));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Input("normalization mean must be finite".into()));
        }
        if std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Input(format!(
                "normalization std entries must be finite and positive: {std:?}"
            )));
        }
        Ok(Self { mean, std })
    }

    /// Zero mean, unit deviation.
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Sample mean and (population) standard deviation of a point set, with the
    /// deviation floored at [`Self::STD_FLOOR`] so constant coordinates stay valid.
    pub fn from_points(points: &[StateVector]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Input("cannot estimate stats from an empty point set".into()))?;
        let dim = first.len();
        let mut mean = vec![0.0; dim];
        for p in points {
            check_dim(dim, p.len())?;
            for (m, x) in mean.iter_mut().zip(p.iter()) {
                *m += x;
            }
        }
        let n = points.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for p in points {
            for ((v, x), m) in var.iter_mut().zip(p.iter()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| (v / n).sqrt().max(Self::STD_FLOOR))
            .collect();
        Self::new(mean, std)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn whiten(&self, state: &[f64]) -> Vec<f64> {
        state
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    /// Multiplies every mean and std entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.mean.iter().map(|m| m * factor).collect(),
            self.std.iter().map(|s| s * factor).collect(),
        )
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Integer lattice coordinates of a box.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MeshKey(pub Vec<i64>);

impl MeshKey {
    /// Box center mapped back into raw state coordinates.
    pub fn center(&self, stats: &NormalizationStats, box_size: f64) -> Vec<f64> {
        self.0
            .iter()
            .zip(stats.mean.iter().zip(&stats.std))
            .map(|(&k, (m, s))| (k as f64 * box_size) * s + m)
            .collect()
    }
}

/// Lattice key of `state`. Ties round half away from zero.
pub fn compute_key(
    state: &[f64],
    stats: &NormalizationStats,
    box_size: f64,
) -> Result<MeshKey> {
    check_dim(stats.dim(), state.len())?;
    if !(box_size.is_finite() && box_size > 0.0) {
        return Err(Error::Input(format!("box size must be positive, got {box_size}")));
    }
    if state.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite(state.to_vec()));
    }
    let lattice = state
        .iter()
        .zip(stats.mean.iter().zip(&stats.std))
        .map(|(x, (m, s))| (((x - m) / s) / box_size).round() as i64)
        .collect();
    Ok(MeshKey(lattice))
}

/// Identifier of a mesh state. [`StateId::FAILURE`] is the absorbing sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(usize);

impl StateId {
    pub const FAILURE: StateId = StateId(usize::MAX);

    pub fn new(index: usize) -> Self {
        assert_ne!(index, usize::MAX, "index collides with the failure id");
        StateId(index)
    }

    pub fn is_failure(self) -> bool {
        self == Self::FAILURE
    }

    /// Index of a non-failure state, `None` for the failure sink.
    pub fn index(self) -> Option<usize> {
        (!self.is_failure()).then_some(self.0)
    }

    fn encode(self) -> i64 {
        match self.index() {
            Some(i) => i as i64,
            None => -1,
        }
    }

    fn decode(raw: i64) -> Result<Self> {
        match raw {
            -1 => Ok(Self::FAILURE),
            i if i >= 0 => Ok(StateId(i as usize)),
            other => Err(Error::Parse(format!("invalid state id {other}"))),
        }
    }
}

impl std::fmt::Display for StateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.index() {
            Some(i) => write!(f, "{i}"),
            None => write!(f, "failure"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshEntry {
    pub id: StateId,
    pub key: MeshKey,
    /// First concrete state that landed in this box.
    pub representative: StateVector,
    /// One successor per disturbance, in disturbance-set order.
    pub transitions: Vec<StateId>,
}

/// Hash-table mesh. Entries are stored in id order; `index` maps keys to ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    box_size: f64,
    stats: NormalizationStats,
    entries: Vec<MeshEntry>,
    index: HashMap<MeshKey, usize>,
}

impl Mesh {
    pub fn new(stats: NormalizationStats, box_size: f64) -> Result<Self> {
        if !(box_size.is_finite() && box_size > 0.0) {
            return Err(Error::Input(format!("box size must be positive, got {box_size}")));
        }
        Ok(Self {
            box_size,
            stats,
            entries: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn box_size(&self) -> f64 {
        self.box_size
    }

    pub fn stats(&self) -> &NormalizationStats {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MeshEntry] {
        &self.entries
    }

    pub fn key_of(&self, state: &[f64]) -> Result<MeshKey> {
        compute_key(state, &self.stats, self.box_size)
    }

    /// Id of the box containing `state`, if that box is in the mesh.
    pub fn lookup(&self, state: &[f64]) -> Result<Option<StateId>> {
        let key = self.key_of(state)?;
        Ok(self.index.get(&key).map(|&i| StateId(i)))
    }

    pub fn contains_key(&self, key: &MeshKey) -> bool {
        self.index.contains_key(key)
    }

    /// Returns the id of the box holding `state`, inserting a new entry (with
    /// `state` as its representative) when the box is unseen.
    pub fn insert_or_get(&mut self, state: &StateVector) -> Result<(StateId, bool)> {
        let key = self.key_of(state)?;
        if let Some(&i) = self.index.get(&key) {
            return Ok((StateId(i), false));
        }
        let id = StateId::new(self.entries.len());
        self.index.insert(key.clone(), self.entries.len());
        self.entries.push(MeshEntry {
            id,
            key,
            representative: state.clone(),
            transitions: Vec::new(),
        });
        Ok((id, true))
    }

    pub fn entry(&self, id: StateId) -> Result<&MeshEntry> {
        id.index()
            .and_then(|i| self.entries.get(i))
            .ok_or(Error::UnknownId(id.0))
    }

    pub(crate) fn entry_mut(&mut self, id: StateId) -> Result<&mut MeshEntry> {
        let raw = id.0;
        id.index()
            .and_then(|i| self.entries.get_mut(i))
            .ok_or(Error::UnknownId(raw))
    }

    pub fn representative_state(&self, id: StateId) -> Result<&StateVector> {
        self.entry(id).map(|e| &e.representative)
    }

    /// Checks closure (every listed successor exists) and, when `arity` is
    /// given, that every transition list has exactly that length.
    pub fn validate(&self, arity: Option<usize>) -> Result<()> {
        for entry in &self.entries {
            let id = entry.id.0;
            if let Some(expected) = arity {
                if entry.transitions.len() != expected {
                    return Err(Error::Arity {
                        id,
                        len: entry.transitions.len(),
                        expected,
                    });
                }
            }
            for t in &entry.transitions {
                if let Some(i) = t.index() {
                    if i >= self.entries.len() {
                        return Err(Error::Closure { id, target: i });
                    }
                }
            }
        }
        Ok(())
    }

    /// Common transition-list length, or an arity error naming the first
    /// entry that disagrees with entry 0.
    pub fn arity(&self) -> Result<usize> {
        let expected = self.entries.first().map_or(0, |e| e.transitions.len());
        self.validate(Some(expected))?;
        Ok(expected)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&MeshDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<MeshDocument>(text)?.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct MeshDocument {
    box_size: f64,
    mean: Vec<f64>,
    std: Vec<f64>,
    entries: Vec<EntryDocument>,
}

#[derive(Serialize, Deserialize)]
struct EntryDocument {
    id: usize,
    lattice: Vec<i64>,
    representative: Vec<f64>,
    transitions: Vec<i64>,
}

impl From<&Mesh> for MeshDocument {
    fn from(mesh: &Mesh) -> Self {
        Self {
            box_size: mesh.box_size,
            mean: mesh.stats.mean.clone(),
            std: mesh.stats.std.clone(),
            entries: mesh
                .entries
                .iter()
                .map(|e| EntryDocument {
                    id: e.id.0,
                    lattice: e.key.0.clone(),
                    representative: e.representative.to_vec(),
                    transitions: e.transitions.iter().map(|t| t.encode()).collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<MeshDocument> for Mesh {
    type Error = Error;

    fn try_from(doc: MeshDocument) -> Result<Self> {
        let stats = NormalizationStats::new(doc.mean, doc.std)?;
        let mut mesh = Mesh::new(stats, doc.box_size)?;
        for (pos, e) in doc.entries.into_iter().enumerate() {
            if e.id != pos {
                return Err(Error::Parse(format!(
                    "mesh entry at position {pos} has id {}",
                    e.id
                )));
            }
            let key = MeshKey(e.lattice);
            if mesh.index.insert(key.clone(), pos).is_some() {
                return Err(Error::Parse(format!("duplicate lattice key at entry {pos}")));
            }
            let transitions = e
                .transitions
                .into_iter()
                .map(StateId::decode)
                .collect::<Result<_>>()?;
            mesh.entries.push(MeshEntry {
                id: StateId(pos),
                key,
                representative: StateVector::new(e.representative)?,
                transitions,
            });
        }
        mesh.validate(None)?;
        Ok(mesh)
    }
}
