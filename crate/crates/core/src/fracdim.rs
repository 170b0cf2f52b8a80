//! Box-counting dimension over a ladder of box sizes.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{compute_key, NormalizationStats, StateVector};

/// Box sizes `d0 · factor^-j` for `j = 0..levels`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxLadder {
    pub d0: f64,
    pub factor: f64,
    pub levels: usize,
}

impl BoxLadder {
    pub const DEFAULT_LEVELS: usize = 6;

    pub fn new(d0: f64, factor: f64, levels: usize) -> Result<Self> {
        let ladder = Self { d0, factor, levels };
        ladder.validate()?;
        Ok(ladder)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0 && self.d0.is_finite()) {
            return Err(Error::Input(format!("ladder base {} must be positive", self.d0)));
        }
        if !(self.factor > 1.0 && self.factor.is_finite()) {
            return Err(Error::Input(format!("ladder factor {} must exceed 1", self.factor)));
        }
        if self.levels < 2 {
            return Err(Error::Input("ladder needs at least 2 levels".into()));
        }
        Ok(())
    }

    pub fn sizes(&self) -> Vec<f64> {
        (0..self.levels).map(|j| self.d0 / self.factor.powi(j as i32)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionFit {
    pub dimension: f64,
    pub counts: Vec<(f64, usize)>,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub dimension: f64,
    pub r_squared: f64,
}

impl DimensionFit {
    pub fn summary(&self) -> FitSummary {
        FitSummary {
            dimension: self.dimension,
            r_squared: self.r_squared,
        }
    }
}

/// Number of distinct mesh keys of `points` at a single box size.
pub fn count_boxes(points: &[StateVector], stats: &NormalizationStats, box_size: f64) -> Result<usize> {
    let mut keys = HashSet::with_capacity(points.len());
    for p in points {
        keys.insert(compute_key(p, stats, box_size)?);
    }
    Ok(keys.len())
}

pub fn box_counts(
    points: &[StateVector],
    ladder: &BoxLadder,
    stats: &NormalizationStats,
) -> Result<Vec<(f64, usize)>> {
    if points.is_empty() {
        return Err(Error::Input("cannot count boxes of an empty point set".into()));
    }
    ladder.validate()?;
    ladder
        .sizes()
        .into_iter()
        .map(|d| Ok((d, count_boxes(points, stats, d)?)))
        .collect()
}

/// Least-squares slope of `ln N` against `ln(1/d)`.
///
/// Negative slopes are reported as 0. A perfectly flat set of counts has
/// `r_squared = 1`.
pub fn box_dimension(counts: &[(f64, usize)]) -> Result<DimensionFit> {
    if let Some(&(d, n)) = counts.iter().find(|(d, n)| !(*d > 0.0 && d.is_finite()) || *n == 0) {
        return Err(Error::Input(format!("invalid count pair (d = {d}, N = {n})")));
    }
    let mut distinct: Vec<f64> = counts.iter().map(|c| c.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Input("dimension fit needs at least 2 distinct box sizes".into()));
    }
    let xs: Vec<f64> = counts.iter().map(|(d, _)| (1.0 / d).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|(_, n)| (*n as f64).ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(DimensionFit {
        dimension: slope.max(0.0),
        counts: counts.to_vec(),
        r_squared,
    })
}

/// Two-scale dimension `ln(N(d0/f) / N(d0)) / ln f`, clamped below at 1.
pub fn trajectory_mesh_dim(
    trajectory: &[StateVector],
    stats: &NormalizationStats,
    d0: f64,
    f: f64,
) -> Result<f64> {
    if trajectory.len() < 2 {
        return Err(Error::Input(format!(
            "trajectory needs at least 2 states, got {}",
            trajectory.len()
        )));
    }
    BoxLadder::new(d0, f, 2)?;
    let coarse = count_boxes(trajectory, stats, d0)? as f64;
    let fine = count_boxes(trajectory, stats, d0 / f)? as f64;
    Ok(((fine / coarse).ln() / f.ln()).max(1.0))
}

#[derive(Debug, Serialize, Deserialize)]
struct CountRow {
    box_size: f64,
    count: usize,
}

pub fn write_counts_csv(path: &Path, counts: &[(f64, usize)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for &(box_size, count) in counts {
        w.serialize(CountRow { box_size, count })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_counts_csv(path: &Path) -> Result<Vec<(f64, usize)>> {
    csv::Reader::from_path(path)?
        .deserialize::<CountRow>()
        .map(|r| r.map(|r| (r.box_size, r.count)).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::pointsets::{fractal_pointset, PointSetKind};
    use proptest::prelude::*;

    fn sv(v: Vec<f64>) -> StateVector {
        StateVector::new(v).unwrap()
    }

    #[test]
    fn repeated_point_counts_one() {
        let pts = vec![sv(vec![0.3, -0.2]); 10];
        let ladder = BoxLadder::new(1.0, 2.0, 5).unwrap();
        let counts = box_counts(&pts, &ladder, &NormalizationStats::identity(2)).unwrap();
        assert!(counts.iter().all(|&(_, n)| n == 1));
        let fit = box_dimension(&counts).unwrap();
        assert_eq!(fit.dimension, 0.0);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn unit_line_count_at_fine_box() {
        let pts = fractal_pointset(PointSetKind::Line, 10).unwrap();
        let n = count_boxes(&pts, &NormalizationStats::identity(2), 2f64.powi(-5)).unwrap();
        assert_eq!(n, 33);
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        let counts: Vec<_> = (0..6).map(|j| (0.5f64.powi(j), 3usize.pow(j as u32))).collect();
        let fit = box_dimension(&counts).unwrap();
        assert!((fit.dimension - 3f64.ln() / 2f64.ln()).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_single_scale() {
        assert!(box_dimension(&[(0.1, 4), (0.1, 5)]).is_err());
        assert!(box_dimension(&[(0.1, 4), (0.05, 0)]).is_err());
    }

    #[test]
    fn ladder_validation() {
        assert!(BoxLadder::new(0.0, 2.0, 3).is_err());
        assert!(BoxLadder::new(1.0, 1.0, 3).is_err());
        assert!(BoxLadder::new(1.0, 2.0, 1).is_err());
        assert_eq!(BoxLadder::new(1.0, 2.0, 3).unwrap().sizes(), vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn static_trajectory_clamps_to_one() {
        let traj = vec![sv(vec![0.0, 0.0]); 5];
        let dm = trajectory_mesh_dim(&traj, &NormalizationStats::identity(2), 0.01, 1.5).unwrap();
        assert_eq!(dm, 1.0);
        assert!(trajectory_mesh_dim(&traj[..1], &NormalizationStats::identity(2), 0.01, 1.5).is_err());
    }

    #[test]
    fn grid_trajectory_is_two_dimensional() {
        let traj: Vec<_> = (0..=300)
            .flat_map(|i| (0..=300).map(move |j| sv(vec![i as f64 * 1e-3, j as f64 * 1e-3])))
            .collect();
        let stats = NormalizationStats::identity(2);
        assert_eq!(count_boxes(&traj, &stats, 0.01).unwrap(), 961);
        assert_eq!(count_boxes(&traj, &stats, 0.01 / 1.5).unwrap(), 2116);
        let dm = trajectory_mesh_dim(&traj, &stats, 0.01, 1.5).unwrap();
        assert!((dm - (2116f64 / 961.0).ln() / 1.5f64.ln()).abs() < 1e-12);
        assert!((dm - 2.0).abs() < 0.1);
    }

    #[test]
    fn counts_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("counts.csv");
        let counts = vec![(0.25, 14), (0.125, 28), (1.0 / 3.0, 9)];
        write_counts_csv(&path, &counts).unwrap();
        assert_eq!(read_counts_csv(&path).unwrap(), counts);
    }

    fn cloud() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..60)
    }

    proptest! {
        #[test]
        fn scale_invariance(points in cloud(), c in 0.1f64..10.0) {
            let stats = NormalizationStats::new(vec![0.5, -1.0], vec![1.5, 0.7]).unwrap();
            let scaled_stats = NormalizationStats::new(vec![0.5 * c, -c], vec![1.5 * c, 0.7 * c]).unwrap();
            let pts: Vec<_> = points.iter().map(|p| sv(p.clone())).collect();
            let scaled: Vec<_> = points.iter().map(|p| sv(p.iter().map(|x| x * c).collect())).collect();
            for d in [1.0, 0.5, 0.25] {
                let a = count_boxes(&pts, &stats, d).unwrap();
                let b = count_boxes(&scaled, &scaled_stats, d).unwrap();
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn adding_points_never_lowers_counts(points in cloud(), extra in cloud()) {
            let stats = NormalizationStats::identity(2);
            let pts: Vec<_> = points.iter().map(|p| sv(p.clone())).collect();
            let mut more = pts.clone();
            more.extend(extra.iter().map(|p| sv(p.clone())));
            for d in [1.0, 0.3, 0.1] {
                prop_assert!(count_boxes(&more, &stats, d).unwrap() >= count_boxes(&pts, &stats, d).unwrap());
            }
        }

        #[test]
        fn fitted_dimension_is_bounded(points in cloud()) {
            let pts: Vec<_> = points.iter().map(|p| sv(p.clone())).collect();
            let ladder = BoxLadder::new(1.0, 2.0, 5).unwrap();
            let counts = box_counts(&pts, &ladder, &NormalizationStats::identity(2)).unwrap();
            let fit = box_dimension(&counts).unwrap();
            prop_assert!(fit.dimension >= 0.0 && fit.dimension <= 2.2);
        }

        #[test]
        fn odd_refinement_counts_nondecreasing(points in cloud()) {
            let stats = NormalizationStats::identity(2);
            let pts: Vec<_> = points.iter().map(|p| sv(p.clone())).collect();
            let coarse = count_boxes(&pts, &stats, 0.9).unwrap();
            let fine = count_boxes(&pts, &stats, 0.3).unwrap();
            prop_assert!(fine >= coarse);
        }
    }
}
