//! Ball-paddle simulator.
//!
//! A point ball flies ballistically and rebounds off a tilted paddle disc.
//! The rebound reflects the relative velocity about the paddle normal,
//! scales it by a restitution factor and adds the paddle velocity back. The
//! paddle is kinematic: it teleports to the intercept point and holds the
//! commanded orientation and velocity through contact.

mod episode;
mod flight;

pub use episode::{
    run_episode, BounceRecord, DecayPolicy, EpisodeSetup, EpisodeTrace, FailureKind,
    PlannedAction, Policy, SolveSummary, Termination, TrajectoryPoint,
};
pub use flight::{ball_state_at, detect_impact, flight_step, plane_crossing};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::Transition;
use crate::vec3::Vec3;

/// Physical and numerical parameters of the simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub gravity: f64,
    /// Restitution factor applied to the reflected relative velocity.
    pub restitution: f64,
    /// Height of the plane where the paddle meets the ball.
    pub hit_plane_z: f64,
    /// Episodes fail when the intercept leaves this horizontal radius.
    pub workspace_radius: f64,
    /// Paddle disc radius used by impact detection.
    pub paddle_radius: f64,
    /// Roll offset the faulty analytic model adds to the commanded roll.
    pub observation_roll_error: f64,
    /// Integration step for flight.
    pub flight_dt: f64,
    /// Impact times are bisected to this tolerance.
    pub impact_time_tol: f64,
    /// Rebounds whose apex would rise less than this above the hit plane end
    /// the episode.
    pub min_apex_height: f64,
    /// Record the flight path in episode traces.
    pub record_trajectory: bool,
}

impl Default for SimConfig {
    fn default() -> SimConfig {
        SimConfig {
            gravity: 9.81,
            restitution: 0.8,
            hit_plane_z: 0.0,
            workspace_radius: 2.5,
            paddle_radius: 0.15,
            observation_roll_error: 0.1,
            flight_dt: 0.01,
            impact_time_tol: 1e-9,
            min_apex_height: 1e-4,
            record_trajectory: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive: [(&str, f64); 5] = [
            ("sim.gravity", self.gravity),
            ("sim.paddle_radius", self.paddle_radius),
            ("sim.flight_dt", self.flight_dt),
            ("sim.impact_time_tol", self.impact_time_tol),
            ("sim.workspace_radius", self.workspace_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.restitution > 0.0 && self.restitution <= 1.0) {
            return Err(Error::Config(format!(
                "sim.restitution must be in (0, 1], got {}",
                self.restitution
            )));
        }
        if self.min_apex_height < 0.0 {
            return Err(Error::Config(format!(
                "sim.min_apex_height must be non-negative, got {}",
                self.min_apex_height
            )));
        }
        if !self.observation_roll_error.is_finite() || !self.hit_plane_z.is_finite() {
            return Err(Error::Config(
                "sim.observation_roll_error and sim.hit_plane_z must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Instantaneous world state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub ball_pos: Vec3,
    pub ball_vel: Vec3,
    pub paddle_pos: Vec3,
    pub paddle_roll: f64,
    pub paddle_pitch: f64,
    pub paddle_vel: Vec3,
}

impl SimState {
    pub fn is_finite(&self) -> bool {
        self.ball_pos.is_finite()
            && self.ball_vel.is_finite()
            && self.paddle_pos.is_finite()
            && self.paddle_roll.is_finite()
            && self.paddle_pitch.is_finite()
            && self.paddle_vel.is_finite()
    }
}

/// Paddle command applied at contact: orientation plus velocity. The vector
/// layout is `[roll, pitch, vx, vy, vz]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub roll: f64,
    pub pitch: f64,
    pub paddle_vel: Vec3,
}

impl Action {
    pub const DIM: usize = 5;

    pub fn to_array(self) -> [f64; 5] {
        [
            self.roll,
            self.pitch,
            self.paddle_vel.x,
            self.paddle_vel.y,
            self.paddle_vel.z,
        ]
    }

    pub fn from_slice(a: &[f64]) -> Result<Action> {
        if a.len() != Action::DIM {
            return Err(Error::DimMismatch {
                context: "action vector",
                expected: Action::DIM,
                got: a.len(),
            });
        }
        Ok(Action {
            roll: a[0],
            pitch: a[1],
            paddle_vel: Vec3::new(a[2], a[3], a[4]),
        })
    }

    pub fn is_finite(self) -> bool {
        self.roll.is_finite() && self.pitch.is_finite() && self.paddle_vel.is_finite()
    }
}

/// Model-facing view of one contact: incoming ball velocity plus the action.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactInputs {
    pub ball_vel: Vec3,
    pub roll: f64,
    pub pitch: f64,
    pub paddle_vel: Vec3,
}

/// Model input layout: `[ball_vel, roll, pitch, paddle_vel]`, state first.
pub const MODEL_INPUT_DIM: usize = 8;
pub const MODEL_OUTPUT_DIM: usize = 3;

impl ImpactInputs {
    pub fn action(&self) -> Action {
        Action {
            roll: self.roll,
            pitch: self.pitch,
            paddle_vel: self.paddle_vel,
        }
    }

    pub fn model_input(&self) -> [f64; MODEL_INPUT_DIM] {
        [
            self.ball_vel.x,
            self.ball_vel.y,
            self.ball_vel.z,
            self.roll,
            self.pitch,
            self.paddle_vel.x,
            self.paddle_vel.y,
            self.paddle_vel.z,
        ]
    }

    pub fn from_model_input(v: &[f64]) -> Result<ImpactInputs> {
        if v.len() != MODEL_INPUT_DIM {
            return Err(Error::DimMismatch {
                context: "model input",
                expected: MODEL_INPUT_DIM,
                got: v.len(),
            });
        }
        Ok(ImpactInputs {
            ball_vel: Vec3::new(v[0], v[1], v[2]),
            roll: v[3],
            pitch: v[4],
            paddle_vel: Vec3::new(v[5], v[6], v[7]),
        })
    }
}

/// One observed contact with its outcome.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactSample {
    #[serde(flatten)]
    pub inputs: ImpactInputs,
    pub ball_vel_out: Vec3,
}

impl ImpactSample {
    pub fn to_transition(self) -> Transition {
        Transition::new(
            self.inputs.ball_vel.to_array().to_vec(),
            self.inputs.action().to_array().to_vec(),
            self.ball_vel_out.to_array().to_vec(),
        )
    }
}

/// Unit normal of the paddle disc. Roll tips the normal toward negative y,
/// pitch toward positive x; zero angles give the upright normal (0, 0, 1).
pub fn paddle_normal(roll: f64, pitch: f64) -> Vec3 {
    Vec3::new(
        roll.cos() * pitch.sin(),
        -roll.sin(),
        roll.cos() * pitch.cos(),
    )
}

/// Reflection rebound without the approach precondition: reflect the
/// relative velocity about `normal`, scale by `restitution`, add the paddle
/// velocity back. Prediction-side code uses this directly.
pub fn impact_map(v_ball: Vec3, v_paddle: Vec3, normal: Vec3, restitution: f64) -> Vec3 {
    let v_rel = v_ball - v_paddle;
    let reflected = v_rel - 2.0 * normal.dot(v_rel) * normal;
    restitution * reflected + v_paddle
}

/// Rebound at contact. Errors unless the ball actually approaches the paddle
/// face (`normal . v_rel < 0`).
pub fn impact(v_ball: Vec3, v_paddle: Vec3, normal: Vec3, restitution: f64) -> Result<Vec3> {
    let v_rel = v_ball - v_paddle;
    if normal.dot(v_rel) >= 0.0 {
        return Err(Error::NoImpact);
    }
    Ok(impact_map(v_ball, v_paddle, normal, restitution))
}

/// What the flawed analytic model predicts for a contact: the same reflection
/// law evaluated at a normal tilted by the observation roll error.
pub fn analytic_prediction(inputs: &ImpactInputs, config: &SimConfig) -> Vec3 {
    let n = paddle_normal(inputs.roll + config.observation_roll_error, inputs.pitch);
    impact_map(inputs.ball_vel, inputs.paddle_vel, n, config.restitution)
}

#[cfg(test)]
mod tests;
