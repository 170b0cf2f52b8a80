//! Principal components of mesh representatives.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Representatives are whitened with the mesh stats before centering, so
/// every axis is in box-size units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    /// Unit principal axes, largest variance first.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub projected: Vec<Vec<f64>>,
    /// True when the state's transition list contains the failure state.
    pub failure_flag: Vec<bool>,
}

pub fn pca_project(mesh: &Mesh, k: usize) -> Result<PcaProjection> {
    let dim = mesh.stats().dim();
    if k == 0 || k > dim {
        return Err(Error::Input(format!("k = {k} must lie in 1..={dim}")));
    }
    let m = mesh.len();
    if m < k {
        return Err(Error::Input(format!("mesh has {m} states, fewer than k = {k}")));
    }
    let rows: Vec<Vec<f64>> = mesh
        .entries()
        .iter()
        .map(|e| mesh.stats().whiten(&e.representative))
        .collect();
    let mut centered = DMatrix::from_fn(m, dim, |i, j| rows[i][j]);
    for j in 0..dim {
        let mean = centered.column(j).sum() / m as f64;
        centered.column_mut(j).add_scalar_mut(-mean);
    }
    let cov = centered.transpose() * &centered / m as f64;
    let eigen = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = eigen.eigenvalues.iter().map(|v| v.max(0.0)).sum();

    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &c in &order[..k] {
        let mut axis: Vec<f64> = eigen.eigenvectors.column(c).iter().copied().collect();
        let lead = axis
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if v.abs() > axis[best].abs() { i } else { best });
        if axis[lead] < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(axis);
        let var = eigen.eigenvalues[c].max(0.0);
        explained_variance.push(if total > 0.0 { var / total } else { 0.0 });
    }
    let projected = (0..m)
        .map(|i| {
            components
                .iter()
                .map(|axis| axis.iter().zip(centered.row(i).iter()).map(|(a, x)| a * x).sum())
                .collect()
        })
        .collect();
    let failure_flag = mesh
        .entries()
        .iter()
        .map(|e| e.transitions.iter().any(|t| t.is_failure()))
        .collect();
    Ok(PcaProjection {
        components,
        explained_variance,
        projected,
        failure_flag,
    })
}

/// One row per mesh state: `id, pc1..pck, failure`.
pub fn write_projection_csv(path: &Path, pca: &PcaProjection) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let k = pca.components.len();
    let mut header = vec!["id".to_string()];
    header.extend((1..=k).map(|i| format!("pc{i}")));
    header.push("failure".into());
    w.write_record(&header)?;
    for (id, (coords, fail)) in pca.projected.iter().zip(&pca.failure_flag).enumerate() {
        let mut record = vec![id.to_string()];
        record.extend(coords.iter().map(|c| format!("{c:?}")));
        record.push(u8::from(*fail).to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `(projected coordinates, failure flag)` rows back.
pub fn read_projection_csv(path: &Path) -> Result<Vec<(Vec<f64>, bool)>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let n = record.len();
        if n < 3 {
            return Err(Error::Parse(format!("projection row has {n} fields")));
        }
        let coords = (1..n - 1)
            .map(|i| record[i].parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
            .collect::<Result<_>>()?;
        out.push((coords, &record[n - 1] == "1"));
    }
    Ok(out)
}
