//! Spring-loaded inverted pendulum hopper sampled at the apex of each flight.
//!
//! Apex state is `(height, forward speed, leg energy)`. Vertical velocity is
//! zero at the apex and horizontal position is dropped from the state.
//!
//! One section step:
//! 1. the push is applied as an instantaneous velocity change at the apex,
//! 2. ballistic flight until the foot, placed at the commanded touchdown
//!    angle, reaches the ground,
//! 3. stance on a massless linear radial spring (conservative),
//! 4. at liftoff the stored leg energy is added to the radial kinetic energy
//!    (negative values brake),
//! 5. ballistic flight to the next apex.
//!
//! The policy's second action recharges the leg energy for the following hop:
//! `e' = (1 - lag) * e + lag * thrust_max * a1`.
//!
//! Phases are integrated with fixed-step RK4; touchdown, liftoff and apex are
//! located by bisection on the step length.

use serde::{Deserialize, Serialize};

use crate::dynamics::{clamp_action, Disturbance, Environment, SectionOutcome, Transition};
use crate::error::{Error, Result};
use crate::mesh::{NormalizationStats, StateVector};
use crate::policy::LinearPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlipParams {
    pub mass: f64,
    pub stiffness: f64,
    pub rest_length: f64,
    pub gravity: f64,
    /// Apex heights below this fail.
    pub h_fail: f64,
    /// Touchdown angle from vertical for a zero action, radians.
    pub touchdown_angle: f64,
    /// Touchdown angle change for a unit action.
    pub angle_range: f64,
    /// Leg energy commanded by a unit thrust action, joules.
    pub thrust_max: f64,
    pub thrust_lag: f64,
    pub dt: f64,
    pub event_tol: f64,
    /// Integration step cap per section step.
    pub max_steps: usize,
    pub nominal_height: f64,
    pub nominal_speed: f64,
    pub init_noise: [f64; 3],
    pub forward_weight: f64,
    pub action_penalty: f64,
    pub alive_bonus: f64,
}

impl Default for SlipParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            stiffness: 400.0,
            rest_length: 1.0,
            gravity: 9.81,
            h_fail: 0.9,
            touchdown_angle: 0.37,
            angle_range: 0.15,
            thrust_max: 1.0,
            thrust_lag: 0.5,
            dt: 1e-3,
            event_tol: 1e-9,
            max_steps: 100_000,
            nominal_height: 1.1,
            nominal_speed: NOMINAL_SPEED,
            init_noise: [0.01, 0.05, 0.0],
            forward_weight: 1.0,
            action_penalty: 0.1,
            alive_bonus: 1.0,
        }
    }
}

/// Period-one forward speed at the default nominal height with zero action.
pub const NOMINAL_SPEED: f64 = 5.735692852775204;

/// Outcome of one hop with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Hop {
    pub outcome: SectionOutcome,
    /// Horizontal distance from the starting apex to the next one.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlipHopper {
    params: SlipParams,
}

type Phase = [f64; 4];

#[derive(Clone, Copy)]
enum Event {
    Touchdown { height: f64 },
    Liftoff,
    Apex,
}

impl SlipHopper {
    pub fn new(params: SlipParams) -> Result<Self> {
        let p = &params;
        let positive = [p.mass, p.stiffness, p.rest_length, p.gravity, p.dt, p.event_tol];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Input(
                "mass, stiffness, rest length, gravity, dt and event tolerance must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&p.thrust_lag) {
            return Err(Error::Input("thrust lag must lie in [0, 1]".into()));
        }
        if p.max_steps == 0 {
            return Err(Error::Input("integration step cap must be positive".into()));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &SlipParams {
        &self.params
    }

    /// Apex energy `m g y + m v^2 / 2` of a state.
    pub fn mechanical_energy(&self, state: &[f64]) -> f64 {
        let p = &self.params;
        p.mass * p.gravity * state[0] + 0.5 * p.mass * state[1] * state[1]
    }

    fn derivative(&self, z: &Phase, stance: bool) -> Phase {
        let p = &self.params;
        if stance {
            let r = (z[0] * z[0] + z[1] * z[1]).sqrt();
            let f = p.stiffness * (p.rest_length - r) / (p.mass * r);
            [z[2], z[3], f * z[0], f * z[1] - p.gravity]
        } else {
            [z[2], z[3], 0.0, -p.gravity]
        }
    }

    fn rk4(&self, z: &Phase, h: f64, stance: bool) -> Phase {
        let add = |a: &Phase, k: &Phase, s: f64| -> Phase {
            [a[0] + s * k[0], a[1] + s * k[1], a[2] + s * k[2], a[3] + s * k[3]]
        };
        let k1 = self.derivative(z, stance);
        let k2 = self.derivative(&add(z, &k1, h / 2.0), stance);
        let k3 = self.derivative(&add(z, &k2, h / 2.0), stance);
        let k4 = self.derivative(&add(z, &k3, h), stance);
        let mut out = *z;
        for i in 0..4 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    fn crossed(&self, event: Event, z: &Phase) -> bool {
        match event {
            Event::Touchdown { height } => z[1] <= height && z[3] <= 0.0,
            Event::Liftoff => z[0] * z[0] + z[1] * z[1] >= self.params.rest_length.powi(2),
            Event::Apex => z[3] <= 0.0,
        }
    }

    /// Integrates until `event` fires. Returns the phase state at the event
    /// (first bisection bracket end past the crossing) and the elapsed time,
    /// or `None` when the body hits the ground first.
    fn run_until(
        &self,
        mut z: Phase,
        event: Event,
        stance: bool,
        steps: &mut usize,
    ) -> Result<Option<(Phase, f64)>> {
        let p = &self.params;
        let mut t = 0.0;
        loop {
            if *steps >= p.max_steps {
                return Err(Error::Divergence {
                    steps: *steps,
                    cap: p.max_steps,
                });
            }
            *steps += 1;
            let next = self.rk4(&z, p.dt, stance);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    steps: *steps,
                    cap: p.max_steps,
                });
            }
            if self.crossed(event, &next) {
                let (mut lo, mut hi) = (0.0, p.dt);
                let mut at_hi = next;
                while hi - lo > p.event_tol {
                    let mid = 0.5 * (lo + hi);
                    let zm = self.rk4(&z, mid, stance);
                    if self.crossed(event, &zm) {
                        hi = mid;
                        at_hi = zm;
                    } else {
                        lo = mid;
                    }
                }
                if stance && at_hi[1] <= 0.0 {
                    return Ok(None);
                }
                return Ok(Some((at_hi, t + hi)));
            }
            if stance && next[1] <= 0.0 {
                return Ok(None);
            }
            z = next;
            t += p.dt;
        }
    }

    /// One apex-to-apex hop with an explicit (unclamped) action.
    pub fn hop(&self, state: &[f64], action: &[f64], push: &Disturbance) -> Result<Hop> {
        let p = &self.params;
        if state.len() != 3 {
            return Err(Error::DimensionMismatch { expected: 3, got: state.len() });
        }
        if action.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: action.len() });
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(state.to_vec()));
        }
        let fail = Hop {
            outcome: SectionOutcome::Failure,
            distance: 0.0,
        };
        let (height, speed, energy) = (state[0], state[1], state[2]);
        let angle = p.touchdown_angle + p.angle_range * clamp_action(action[0]);
        let command = p.thrust_max * clamp_action(action[1]);
        let (dvx, dvy) = push.impulse_velocity(p.mass);
        let mut steps = 0;

        // flight to touchdown
        let td_height = p.rest_length * angle.cos();
        let flight = [0.0, height, speed + dvx, dvy];
        let touchdown = if height <= td_height {
            flight
        } else {
            match self.run_until(flight, Event::Touchdown { height: td_height }, false, &mut steps)? {
                Some((z, _)) => z,
                None => return Ok(fail),
            }
        };
        let foot = touchdown[0] + touchdown[1] * angle.tan();

        // stance, relative to the foot
        let stance = [touchdown[0] - foot, touchdown[1], touchdown[2], touchdown[3]];
        let Some((lift, _)) = self.run_until(stance, Event::Liftoff, true, &mut steps)? else {
            return Ok(fail);
        };
        let r = (lift[0] * lift[0] + lift[1] * lift[1]).sqrt();
        let (ux, uy) = (lift[0] / r, lift[1] / r);
        let radial = lift[2] * ux + lift[3] * uy;
        let boosted = (radial * radial + 2.0 * energy / p.mass).max(0.0).sqrt();
        let (vx, vy) = (lift[2] + (boosted - radial) * ux, lift[3] + (boosted - radial) * uy);
        if vy <= 0.0 {
            return Ok(fail);
        }

        // flight to the next apex
        let Some((apex, _)) = self.run_until([lift[0] + foot, lift[1], vx, vy], Event::Apex, false, &mut steps)?
        else {
            return Ok(fail);
        };
        if apex[1] < p.h_fail {
            return Ok(fail);
        }
        let next_energy = (1.0 - p.thrust_lag) * energy + p.thrust_lag * command;
        Ok(Hop {
            outcome: SectionOutcome::Next(StateVector::new(vec![apex[1], apex[2], next_energy])?),
            distance: apex[0],
        })
    }

    /// Forward speed giving a period-one gait at `height` with zero action and
    /// zero leg energy, found by bisection of `v -> v' - v` on `[lo, hi]`.
    pub fn period_one_speed(&self, height: f64, lo: f64, hi: f64) -> Result<f64> {
        let zero = [0.0, 0.0];
        let gap = |v: f64| -> Result<f64> {
            match self.hop(&[height, v, 0.0], &zero, &Disturbance::none())?.outcome {
                SectionOutcome::Next(s) => Ok(s[1] - v),
                SectionOutcome::Failure => Err(Error::Domain(format!("hop from speed {v} fails"))),
            }
        };
        let (mut lo, mut hi) = (lo, hi);
        let (g_lo, g_hi) = (gap(lo)?, gap(hi)?);
        if g_lo.signum() == g_hi.signum() {
            return Err(Error::Domain(format!(
                "speed bracket [{lo}, {hi}] does not straddle a fixed point"
            )));
        }
        let rising = g_hi > g_lo;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if (gap(mid)? > 0.0) == rising {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

impl Environment for SlipHopper {
    fn state_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn nominal_init(&self) -> StateVector {
        StateVector::from_vec_unchecked(vec![self.params.nominal_height, self.params.nominal_speed, 0.0])
    }

    fn init_noise(&self) -> Vec<f64> {
        self.params.init_noise.to_vec()
    }

    fn is_failure(&self, state: &[f64]) -> bool {
        state[0] < self.params.h_fail
    }

    fn step(&self, state: &StateVector, action: &[f64], push: &Disturbance) -> Result<Transition> {
        let p = &self.params;
        let hop = self.hop(state, action, push)?;
        let reward = match hop.outcome {
            SectionOutcome::Failure => 0.0,
            SectionOutcome::Next(_) => {
                let effort: f64 = action.iter().map(|a| clamp_action(*a).powi(2)).sum();
                p.forward_weight * hop.distance - p.action_penalty * effort + p.alive_bonus
            }
        };
        Ok(Transition {
            outcome: hop.outcome,
            reward,
        })
    }
}

/// Whitening stats of the reference gait policy.
pub fn fixture_stats() -> NormalizationStats {
    NormalizationStats::new(vec![1.1, NOMINAL_SPEED, 0.0], vec![0.05, 0.1, 0.05])
        .expect("fixture stats are valid")
}

/// Linear policy that stabilizes the default period-one gait.
///
/// Gains are a discrete LQR design on the finite-difference linearization of
/// the apex map at the default fixed point, expressed in whitened units.
pub fn fixture_policy() -> LinearPolicy {
    LinearPolicy::new(
        vec![
            vec![-0.0351, 0.0889, -0.0003],
            vec![-0.0626, -0.0731, -0.0559],
        ],
        fixture_stats(),
    )
    .expect("fixture policy is valid")
}
