//! Point sets with known box-counting dimension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::StateVector;

/// Upper bound on generated points.
pub const MAX_POINTS: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSetKind {
    /// `2^level + 1` evenly spaced points on the unit segment along x.
    Line,
    /// `(2^level + 1)^2` grid points on the unit square.
    FilledSquare,
    /// The `4^level + 1` vertices of the level-th Koch iterate on `[0,1] x {0}`.
    Koch,
}

pub fn fractal_pointset(kind: PointSetKind, level: u32) -> Result<Vec<StateVector>> {
    let too_big = || Error::Input(format!("{kind:?} level {level} exceeds {MAX_POINTS} points"));
    let side = 1usize.checked_shl(level).filter(|&s| s < MAX_POINTS).ok_or_else(too_big)? + 1;
    let pt = |x: f64, y: f64| StateVector::from_vec_unchecked(vec![x, y]);
    let step = 1.0 / (side - 1) as f64;
    match kind {
        PointSetKind::Line => Ok((0..side).map(|i| pt(i as f64 * step, 0.0)).collect()),
        PointSetKind::FilledSquare => {
            if side.checked_mul(side).is_none_or(|n| n > MAX_POINTS) {
                return Err(too_big());
            }
            Ok((0..side)
                .flat_map(|i| (0..side).map(move |j| (i, j)))
                .map(|(i, j)| pt(i as f64 * step, j as f64 * step))
                .collect())
        }
        PointSetKind::Koch => {
            let count = 4usize
                .checked_pow(level)
                .filter(|&n| n < MAX_POINTS)
                .ok_or_else(too_big)?;
            let mut pts = vec![(0.0f64, 0.0f64), (1.0, 0.0)];
            for _ in 0..level {
                let mut next = Vec::with_capacity(pts.len() * 4);
                for w in pts.windows(2) {
                    let (ax, ay) = w[0];
                    let (bx, by) = w[1];
                    let (dx, dy) = ((bx - ax) / 3.0, (by - ay) / 3.0);
                    let p1 = (ax + dx, ay + dy);
                    let p3 = (ax + 2.0 * dx, ay + 2.0 * dy);
                    // rotate the middle third by +60 degrees
                    let (c, s) = (0.5, 3f64.sqrt() / 2.0);
                    let p2 = (p1.0 + c * dx - s * dy, p1.1 + s * dx + c * dy);
                    next.extend([w[0], p1, p2, p3]);
                }
                next.push(*pts.last().unwrap());
                pts = next;
            }
            debug_assert_eq!(pts.len(), count + 1);
            Ok(pts.into_iter().map(|(x, y)| pt(x, y)).collect())
        }
    }
}
