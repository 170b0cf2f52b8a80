//! Absorbing Markov chain synthesized from a completed mesh.
//!
//! Index 0 is the failure sink; mesh state `i` lives at index `i + 1`.
//! The transient block `Q` is the matrix restricted to indices `1..=m`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Row-stochastic matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    size: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

pub const ROW_SUM_TOL: f64 = 1e-12;

impl TransitionMatrix {
    /// Failure row `{T00 = 1}` followed by one row per mesh entry, each target
    /// weighted by its multiplicity over the disturbance count.
    pub fn from_mesh(mesh: &Mesh) -> Result<Self> {
        let arity = mesh.arity()?;
        if arity == 0 && !mesh.is_empty() {
            return Err(Error::Arity {
                id: 0,
                len: 0,
                expected: 1,
            });
        }
        let size = mesh.len() + 1;
        let mut row_ptr = Vec::with_capacity(size + 1);
        let mut cols = vec![0];
        let mut values = vec![1.0];
        row_ptr.extend([0, 1]);
        let mut targets = Vec::with_capacity(arity);
        for entry in mesh.entries() {
            targets.clear();
            targets.extend(
                entry
                    .transitions
                    .iter()
                    .map(|t| t.index().map_or(0, |i| i + 1)),
            );
            targets.sort_unstable();
            let mut k = 0;
            while k < targets.len() {
                let col = targets[k];
                let run = targets[k..].iter().take_while(|&&c| c == col).count();
                cols.push(col);
                values.push(run as f64 / arity as f64);
                k += run;
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            size,
            row_ptr,
            cols,
            values,
        })
    }

    /// Builds from `(row, col, prob)` triplets and validates stochasticity and
    /// the absorbing failure row.
    pub fn from_triplets(size: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if size == 0 {
            return Err(Error::Input("transition matrix needs at least the failure state".into()));
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; size + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for (k, &(r, c, p)) in triplets.iter().enumerate() {
            if r >= size || c >= size {
                return Err(Error::Input(format!("entry ({r}, {c}) outside a {size}x{size} matrix")));
            }
            if k > 0 && triplets[k - 1].0 == r && triplets[k - 1].1 == c {
                return Err(Error::Input(format!("duplicate entry ({r}, {c})")));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Input(format!("probability {p} at ({r}, {c}) outside [0, 1]")));
            }
            if p == 0.0 {
                continue;
            }
            row_ptr[r + 1] += 1;
            cols.push(c);
            values.push(p);
        }
        for r in 0..size {
            row_ptr[r + 1] += row_ptr[r];
        }
        let t = Self {
            size,
            row_ptr,
            cols,
            values,
        };
        t.validate()?;
        Ok(t)
    }

    /// Dense row-major input; zeros are dropped.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        let mut triplets = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(Error::DimensionMismatch { expected: size, got: row.len() });
            }
            triplets.extend(row.iter().enumerate().filter(|(_, p)| **p != 0.0).map(|(c, p)| (r, c, *p)));
        }
        Self::from_triplets(size, triplets)
    }

    pub fn validate(&self) -> Result<()> {
        if self.row(0).collect::<Vec<_>>() != vec![(0, 1.0)] {
            return Err(Error::Input("row 0 must be the absorbing failure row".into()));
        }
        for r in 0..self.size {
            let sum: f64 = self.row(r).map(|(_, p)| p).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Input(format!("row {r} sums to {sum}")));
            }
        }
        Ok(())
    }

    /// Matrix dimension, `m + 1`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of transient (mesh) states.
    pub fn transient_count(&self) -> usize {
        self.size - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(col, _)| col == c).map_or(0.0, |(_, p)| p)
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row(r).map(|(_, p)| p).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.size]; self.size];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, p) in self.row(r) {
                row[c] = p;
            }
        }
        out
    }

    /// `y = Q x` on the transient block (`x`, `y` indexed by mesh id).
    /// Summation order is fixed by the storage order.
    fn transient_matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self
                .row(i + 1)
                .filter(|&(c, _)| c != 0)
                .map(|(c, p)| p * x[c - 1])
                .sum();
        }
    }

    pub fn write_coo(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_coo_string())?;
        Ok(())
    }

    /// Header `n n nnz`, then one `row col prob` line per stored entry.
    pub fn to_coo_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", self.size, self.size, self.nnz());
        for r in 0..self.size {
            for (c, p) in self.row(r) {
                let _ = writeln!(out, "{r} {c} {p:?}");
            }
        }
        out
    }

    pub fn from_coo_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|e| Error::Parse(format!("bad header {header:?}: {e}"))))
            .collect::<Result<_>>()?;
        let [rows, cols, nnz] = dims[..] else {
            return Err(Error::Parse(format!("bad header {header:?}")));
        };
        if rows != cols {
            return Err(Error::Parse(format!("matrix must be square, got {rows}x{cols}")));
        }
        let triplets = lines
            .map(|line| {
                let parts: Vec<&str> = line.split_whitespace().collect();
                let [r, c, p] = parts[..] else {
                    return Err(Error::Parse(format!("bad entry line {line:?}")));
                };
                let parse_err = |e: &dyn std::fmt::Display| Error::Parse(format!("bad entry {line:?}: {e}"));
                Ok((
                    r.parse().map_err(|e| parse_err(&e))?,
                    c.parse().map_err(|e| parse_err(&e))?,
                    p.parse().map_err(|e| parse_err(&e))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        if triplets.len() != nnz {
            return Err(Error::Parse(format!("header promises {nnz} entries, found {}", triplets.len())));
        }
        Self::from_triplets(rows, triplets)
    }

    pub fn read_coo(path: &Path) -> Result<Self> {
        Self::from_coo_str(&std::fs::read_to_string(path)?)
    }
}

/// Convenience alias matching the pipeline stage name.
pub fn build_transition_matrix(mesh: &Mesh) -> Result<TransitionMatrix> {
    TransitionMatrix::from_mesh(mesh)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub lambda2: f64,
    pub iterations: usize,
    pub residual: f64,
}

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 100_000;

/// Dominant eigenvalue of the transient block `Q`, i.e. the second eigenvalue
/// of `T` after the failure state's `λ1 = 1`.
///
/// Power iteration runs on the lazy operator `(Q + I) / 2`, which has the same
/// eigenvectors. `Q` is nonnegative, so its spectral radius is a real
/// eigenvalue, and after the shift it is strictly dominant even when `Q` is
/// periodic. Convergence is declared when `‖Qv − λv‖∞ ≤ tol · ‖v‖∞`.
/// A defective dominant eigenvalue (nontrivial Jordan block) converges only
/// sublinearly and may exhaust `max_iters`.
pub fn lambda2(t: &TransitionMatrix, tol: f64, max_iters: usize) -> Result<SpectralResult> {
    let m = t.transient_count();
    if m == 0 {
        return Err(Error::Input("chain has no transient states".into()));
    }
    if !(tol > 0.0) || max_iters == 0 {
        return Err(Error::Input("tolerance and iteration cap must be positive".into()));
    }
    let mut v = vec![1.0 / m as f64; m];
    let mut qv = vec![0.0; m];
    let mut recent = Vec::with_capacity(64);
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iters {
        t.transient_matvec(&v, &mut qv);
        // v ≥ 0 with unit 1-norm, so ‖Qv‖₁ is the growth-rate estimate
        let lambda: f64 = qv.iter().sum();
        let vmax = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        residual = qv
            .iter()
            .zip(&v)
            .fold(0.0f64, |a, (q, x)| a.max((q - lambda * x).abs()))
            / vmax;
        if residual <= tol {
            return Ok(SpectralResult {
                lambda2: lambda,
                iterations: iter,
                residual,
            });
        }
        let mut norm = 0.0;
        for (x, q) in v.iter_mut().zip(&qv) {
            *x = 0.5 * (*x + q);
            norm += *x;
        }
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NonConvergence {
                iterations: iter,
                residual,
            });
        }
        v.iter_mut().for_each(|x| *x /= norm);
        if recent.len() == 64 {
            recent.remove(0);
        }
        recent.push(residual);
    }
    if oscillates(&recent) {
        Err(Error::UnsupportedSpectrum { residual })
    } else {
        Err(Error::NonConvergence {
            iterations: max_iters,
            residual,
        })
    }
}

/// Residual history that neither decays nor grows but alternates.
fn oscillates(history: &[f64]) -> bool {
    if history.len() < 8 {
        return false;
    }
    let signs: Vec<bool> = history.windows(2).map(|w| w[1] > w[0]).collect();
    let flips = signs.windows(2).filter(|w| w[0] != w[1]).count();
    let first = history[0];
    let last = *history.last().unwrap();
    flips * 2 > signs.len() && last > 0.5 * first
}

/// Eigenvalue estimate of the mean first passage time, `1 / (1 − λ2)`.
pub fn mfpt_eigen(lambda2: f64) -> Result<f64> {
    if !lambda2.is_finite() || lambda2 >= 1.0 {
        return Err(Error::Domain(format!(
            "λ2 = {lambda2} has no transient decay; MFPT is unbounded"
        )));
    }
    Ok(1.0 / (1.0 - lambda2))
}

/// Largest transient block solved with dense LU.
pub const DENSE_SOLVE_LIMIT: usize = 2_000;
const ITERATIVE_TOL: f64 = 1e-10;
const ITERATIVE_MAX_SWEEPS: usize = 1_000_000;

/// Expected steps to absorption from every transient state, solving
/// `(I − Q) t = 1`. Fails with the offending states when some transient
/// states cannot reach the failure state.
pub fn absorption_times(t: &TransitionMatrix) -> Result<Vec<f64>> {
    let m = t.transient_count();
    let trapped = states_without_exit(t);
    if !trapped.is_empty() {
        return Err(Error::RecurrentClass { states: trapped });
    }
    if m <= DENSE_SOLVE_LIMIT {
        dense_solve(t)
    } else {
        gauss_seidel(t)
    }
}

/// Mean first passage time to failure from a start distribution over mesh states.
pub fn mfpt_exact(t: &TransitionMatrix, start: &[f64]) -> Result<f64> {
    let m = t.transient_count();
    if start.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: start.len() });
    }
    if start.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Input("start distribution must be nonnegative".into()));
    }
    let total: f64 = start.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!("start distribution sums to {total}")));
    }
    let times = absorption_times(t)?;
    Ok(start.iter().zip(&times).map(|(p, x)| p * x).sum())
}

/// Uniform distribution over the given mesh ids.
pub fn uniform_start(m: usize, ids: &[usize]) -> Result<Vec<f64>> {
    if ids.is_empty() {
        return Err(Error::Input("start set is empty".into()));
    }
    let mut start = vec![0.0; m];
    let mut unique = ids.to_vec();
    unique.sort_unstable();
    unique.dedup();
    let w = 1.0 / unique.len() as f64;
    for &i in &unique {
        *start.get_mut(i).ok_or(Error::UnknownId(i))? = w;
    }
    Ok(start)
}

/// Mesh ids (0-based) that cannot reach index 0.
fn states_without_exit(t: &TransitionMatrix) -> Vec<usize> {
    let n = t.size();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in 1..n {
        for (c, _) in t.row(r) {
            preds[c].push(r);
        }
    }
    let mut reach = vec![false; n];
    reach[0] = true;
    let mut stack = vec![0];
    while let Some(c) = stack.pop() {
        for &r in &preds[c] {
            if !reach[r] {
                reach[r] = true;
                stack.push(r);
            }
        }
    }
    (1..n).filter(|&r| !reach[r]).map(|r| r - 1).collect()
}

fn dense_solve(t: &TransitionMatrix) -> Result<Vec<f64>> {
    let m = t.transient_count();
    let mut a = vec![0.0; m * m];
    for i in 0..m {
        a[i * m + i] = 1.0;
        for (c, p) in t.row(i + 1) {
            if c != 0 {
                a[i * m + c - 1] -= p;
            }
        }
    }
    let mut b = vec![1.0; m];
    // LU with partial pivoting, in place
    for k in 0..m {
        let pivot = (k..m)
            .max_by(|&x, &y| a[x * m + k].abs().total_cmp(&a[y * m + k].abs()))
            .unwrap();
        if a[pivot * m + k].abs() < 1e-300 {
            return Err(Error::RecurrentClass { states: vec![k] });
        }
        if pivot != k {
            for j in 0..m {
                a.swap(k * m + j, pivot * m + j);
            }
            b.swap(k, pivot);
        }
        let d = a[k * m + k];
        for i in k + 1..m {
            let f = a[i * m + k] / d;
            if f == 0.0 {
                continue;
            }
            a[i * m + k] = 0.0;
            for j in k + 1..m {
                a[i * m + j] -= f * a[k * m + j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|j| a[i * m + j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i * m + i];
    }
    Ok(x)
}

fn gauss_seidel(t: &TransitionMatrix) -> Result<Vec<f64>> {
    let m = t.transient_count();
    let mut x = vec![0.0; m];
    let mut residual = f64::INFINITY;
    for sweep in 1..=ITERATIVE_MAX_SWEEPS {
        for i in 0..m {
            let mut diag = 1.0;
            let mut off = 0.0;
            for (c, p) in t.row(i + 1) {
                if c == i + 1 {
                    diag -= p;
                } else if c != 0 {
                    off += p * x[c - 1];
                }
            }
            x[i] = (1.0 + off) / diag;
        }
        if sweep % 16 == 0 {
            residual = (0..m)
                .map(|i| {
                    let qx: f64 = t.row(i + 1).filter(|&(c, _)| c != 0).map(|(c, p)| p * x[c - 1]).sum();
                    (x[i] - qx - 1.0).abs()
                })
                .fold(0.0, f64::max);
            if residual < ITERATIVE_TOL {
                return Ok(x);
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: ITERATIVE_MAX_SWEEPS,
        residual,
    })
}

/// Cumulative share of incoming probability mass over transient columns,
/// sorted by column mass (largest first). Each point is
/// `(fraction of states, fraction of mass)`; the last point is `(1, 1)`.
/// A chain with no transient mass at all yields the diagonal.
pub fn transition_mass_cdf(t: &TransitionMatrix) -> Vec<(f64, f64)> {
    let m = t.transient_count();
    let mut mass = vec![0.0; m];
    for r in 0..t.size() {
        for (c, p) in t.row(r) {
            if c != 0 {
                mass[c - 1] += p;
            }
        }
    }
    mass.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = mass.iter().sum();
    let mut acc = 0.0;
    mass.iter()
        .enumerate()
        .map(|(k, w)| {
            acc += w;
            let share = if total > 0.0 { acc / total } else { (k + 1) as f64 / m as f64 };
            let share = if k + 1 == m { 1.0 } else { share.min(1.0) };
            ((k + 1) as f64 / m as f64, share)
        })
        .collect()
}

/// Coordinates of all stored nonzeros, row-major.
pub fn sparsity_pattern(t: &TransitionMatrix) -> Vec<(usize, usize)> {
    (0..t.size()).flat_map(|r| t.row(r).map(move |(c, _)| (r, c))).collect()
}
