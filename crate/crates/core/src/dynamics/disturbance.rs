use std::f64::consts::{PI, TAU};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planar push: a force of `magnitude` newtons along `angle` radians
/// (0 is +x, π/2 is +y) held for `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub magnitude: f64,
    pub angle: f64,
    pub duration: f64,
}

impl Disturbance {
    pub fn new(magnitude: f64, angle: f64, duration: f64) -> Result<Self> {
        if !(magnitude.is_finite() && magnitude >= 0.0) {
            return Err(Error::Input(format!("push magnitude must be >= 0, got {magnitude}")));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::Input(format!("push duration must be > 0, got {duration}")));
        }
        if !(0.0..TAU).contains(&angle) {
            return Err(Error::Input(format!("push angle must lie in [0, 2π), got {angle}")));
        }
        Ok(Self {
            magnitude,
            angle,
            duration,
        })
    }

    /// Zero push along +x.
    pub fn none() -> Self {
        Self {
            magnitude: 0.0,
            angle: 0.0,
            duration: 0.01,
        }
    }

    /// Velocity change `magnitude * duration / mass` resolved into (x, y).
    pub fn impulse_velocity(&self, mass: f64) -> (f64, f64) {
        let dv = self.magnitude * self.duration / mass;
        (dv * self.angle.cos(), dv * self.angle.sin())
    }

    /// Signed force along x, used by grid pushes (angle 0 or π).
    pub fn signed_x_force(&self) -> f64 {
        self.magnitude * self.angle.cos()
    }
}

/// Ordered, non-empty set of pushes. Order indexes the mesh transition lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DisturbanceSet(Vec<Disturbance>);

impl DisturbanceSet {
    pub fn new(pushes: Vec<Disturbance>) -> Result<Self> {
        if pushes.is_empty() {
            return Err(Error::Input("disturbance set must be non-empty".into()));
        }
        Ok(Self(pushes))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pushes(&self) -> &[Disturbance] {
        &self.0
    }
}

/// `count` pushes along the x axis whose signed forces are equally spaced
/// over `[f_min, f_max]`, endpoints included.
pub fn disturbance_grid(count: usize, f_min: f64, f_max: f64, duration: f64) -> Result<DisturbanceSet> {
    if count < 2 {
        return Err(Error::Input(format!("disturbance grid needs at least 2 pushes, got {count}")));
    }
    if !(f_min < f_max) {
        return Err(Error::Input(format!("grid range [{f_min}, {f_max}] is empty")));
    }
    let span = f_max - f_min;
    let last = (count - 1) as f64;
    let pushes = (0..count)
        .map(|i| {
            let v = if i == count - 1 {
                f_max
            } else {
                f_min + span * i as f64 / last
            };
            let angle = if v < 0.0 { PI } else { 0.0 };
            Disturbance::new(v.abs(), angle, duration)
        })
        .collect::<Result<_>>()?;
    DisturbanceSet::new(pushes)
}

/// Uniform push sampler: magnitude in `[min, max]`, angle in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSampler {
    pub magnitude_min: f64,
    pub magnitude_max: f64,
    pub duration: f64,
    /// Restrict angles to {0, π}; used for pushes along x only.
    #[serde(default)]
    pub horizontal_only: bool,
}

impl DisturbanceSampler {
    pub fn new(magnitude_min: f64, magnitude_max: f64, duration: f64) -> Result<Self> {
        let s = Self {
            magnitude_min,
            magnitude_max,
            duration,
            horizontal_only: false,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.magnitude_min >= 0.0 && self.magnitude_min <= self.magnitude_max) {
            return Err(Error::Input(format!(
                "sampler magnitude range [{}, {}] is invalid",
                self.magnitude_min, self.magnitude_max
            )));
        }
        if !(self.duration > 0.0) {
            return Err(Error::Input("sampler duration must be > 0".into()));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Disturbance {
        let u: f64 = rng.random();
        let magnitude = if self.magnitude_min == self.magnitude_max {
            self.magnitude_min
        } else {
            (self.magnitude_min + (self.magnitude_max - self.magnitude_min) * u).min(self.magnitude_max)
        };
        let v: f64 = rng.random();
        let angle = if self.horizontal_only {
            if v < 0.5 {
                0.0
            } else {
                PI
            }
        } else {
            // u in [0,1) can still round up to TAU after scaling
            let a = TAU * v;
            if a >= TAU {
                0.0
            } else {
                a
            }
        };
        Disturbance {
            magnitude,
            angle,
            duration: self.duration,
        }
    }
}
