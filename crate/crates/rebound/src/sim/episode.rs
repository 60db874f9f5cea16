//! Episode driver: repeated plan-fly-rebound cycles.
//!
//! Before each bounce the driver computes the ballistic intercept with the
//! hit plane, teleports the paddle there, and asks the policy for an action.
//! Flight is then integrated step by step with impact detection against the
//! paddle at the intercept; the commanded orientation and paddle velocity
//! apply at the moment of contact.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::vec3::Vec3;

use super::flight::{detect_impact, flight_step, plane_crossing};
use super::{impact, paddle_normal, Action, ImpactInputs, ImpactSample, SimConfig, SimState};

pub trait Policy {
    /// Choose the paddle command for the coming contact. `pre_impact` has the
    /// ball and paddle at the predicted intercept.
    fn plan(&mut self, pre_impact: &SimState) -> Result<PlannedAction>;
}

#[derive(Clone, Copy, Debug)]
pub struct PlannedAction {
    pub action: Action,
    pub solve: Option<SolveSummary>,
}

impl PlannedAction {
    pub fn bare(action: Action) -> PlannedAction {
        PlannedAction {
            action,
            solve: None,
        }
    }
}

/// Solver telemetry a policy may attach to its action.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub cost: f64,
    pub max_violation: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSetup {
    pub initial: SimState,
    /// Landing target in the hit plane.
    pub p_desired: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// Ball will never reach the hit plane again, or the rebound apex is
    /// below the configured minimum.
    BelowPlane,
    /// Intercept outside the reachable workspace radius.
    OutOfWorkspace,
    /// The policy returned an error (for the model-based policy: the action
    /// solve did not converge to a feasible action).
    PolicyRejected,
    NonFiniteAction,
    /// The commanded paddle never made rebounding contact.
    NoContact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Failure(FailureKind),
}

impl Termination {
    pub fn is_failure(self) -> bool {
        matches!(self, Termination::Failure(_))
    }
}

/// One contact: when and where it happened, what was commanded, and the
/// observed velocities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BounceRecord {
    pub index: usize,
    pub time: f64,
    /// Intercept point in the hit plane.
    pub landing: [f64; 2],
    /// Horizontal distance from the landing target.
    pub target_error: f64,
    pub sample: ImpactSample,
    pub solve: Option<SolveSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub ball_pos: Vec3,
}

#[derive(Clone, Debug)]
pub struct EpisodeTrace {
    pub bounces: Vec<BounceRecord>,
    pub termination: Termination,
    /// Simulated seconds, not wall time.
    pub sim_time: f64,
    pub final_state: SimState,
    /// Flight path at `flight_dt` resolution when enabled in the config.
    pub trajectory: Vec<TrajectoryPoint>,
}

pub fn run_episode(
    policy: &mut dyn Policy,
    setup: &EpisodeSetup,
    config: &SimConfig,
    max_bounces: usize,
) -> EpisodeTrace {
    let mut state = setup.initial;
    let mut time = 0.0;
    let mut bounces = Vec::new();
    let mut trajectory = Vec::new();
    let record = |trajectory: &mut Vec<TrajectoryPoint>, time: f64, state: &SimState| {
        if config.record_trajectory {
            trajectory.push(TrajectoryPoint {
                time,
                ball_pos: state.ball_pos,
            });
        }
    };
    record(&mut trajectory, time, &state);

    let finish = |termination, bounces, time, state, trajectory| EpisodeTrace {
        bounces,
        termination,
        sim_time: time,
        final_state: state,
        trajectory,
    };

    for index in 0..max_bounces {
        let Some((t_cross, intercept, v_at_plane)) = plane_crossing(&state, config) else {
            return finish(
                Termination::Failure(FailureKind::BelowPlane),
                bounces,
                time,
                state,
                trajectory,
            );
        };
        if intercept.horizontal_norm() > config.workspace_radius {
            return finish(
                Termination::Failure(FailureKind::OutOfWorkspace),
                bounces,
                time,
                state,
                trajectory,
            );
        }

        // Paddle meets the ball at the intercept; the policy plans from
        // there.
        let pre_impact = SimState {
            ball_pos: intercept,
            ball_vel: v_at_plane,
            paddle_pos: intercept,
            paddle_roll: 0.0,
            paddle_pitch: 0.0,
            paddle_vel: Vec3::ZERO,
        };
        let planned = match policy.plan(&pre_impact) {
            Ok(p) => p,
            Err(_) => {
                return finish(
                    Termination::Failure(FailureKind::PolicyRejected),
                    bounces,
                    time,
                    state,
                    trajectory,
                );
            }
        };
        if !planned.action.is_finite() {
            return finish(
                Termination::Failure(FailureKind::NonFiniteAction),
                bounces,
                time,
                state,
                trajectory,
            );
        }

        // Integrate the flight against the paddle waiting flat at the
        // intercept, then rebound with the commanded pose.
        let mut flight = SimState {
            paddle_pos: intercept,
            paddle_roll: 0.0,
            paddle_pitch: 0.0,
            paddle_vel: Vec3::ZERO,
            ..state
        };
        let max_flight = t_cross + 1.0;
        let mut flown = 0.0;
        let t_hit = loop {
            if let Some(tau) = detect_impact(&flight, config.flight_dt, config) {
                break Some(tau);
            }
            flight = flight_step(&flight, config.flight_dt, config);
            flown += config.flight_dt;
            time += config.flight_dt;
            record(&mut trajectory, time, &flight);
            if flown > max_flight {
                break None;
            }
        };
        let Some(t_hit) = t_hit else {
            return finish(
                Termination::Failure(FailureKind::NoContact),
                bounces,
                time,
                state,
                trajectory,
            );
        };
        flight = flight_step(&flight, t_hit, config);
        time += t_hit;

        let action = planned.action;
        let normal = paddle_normal(action.roll, action.pitch);
        let v_pre = flight.ball_vel;
        let Ok(v_post) = impact(v_pre, action.paddle_vel, normal, config.restitution) else {
            return finish(
                Termination::Failure(FailureKind::NoContact),
                bounces,
                time,
                flight,
                trajectory,
            );
        };

        let sample = ImpactSample {
            inputs: ImpactInputs {
                ball_vel: v_pre,
                roll: action.roll,
                pitch: action.pitch,
                paddle_vel: action.paddle_vel,
            },
            ball_vel_out: v_post,
        };
        let dx = intercept.x - setup.p_desired[0];
        let dy = intercept.y - setup.p_desired[1];
        bounces.push(BounceRecord {
            index,
            time,
            landing: [intercept.x, intercept.y],
            target_error: dx.hypot(dy),
            sample,
            solve: planned.solve,
        });

        state = SimState {
            ball_pos: flight.ball_pos,
            ball_vel: v_post,
            paddle_pos: intercept,
            paddle_roll: action.roll,
            paddle_pitch: action.pitch,
            paddle_vel: action.paddle_vel,
        };
        record(&mut trajectory, time, &state);

        // A rebound that cannot rise above the plane ends the episode.
        let apex = if v_post.z > 0.0 {
            v_post.z * v_post.z / (2.0 * config.gravity)
        } else {
            0.0
        };
        if apex < config.min_apex_height {
            return finish(
                Termination::Failure(FailureKind::BelowPlane),
                bounces,
                time,
                state,
                trajectory,
            );
        }
    }

    finish(Termination::Completed, bounces, time, state, trajectory)
}

/// Paddle-holding policy for passive data collection: near-flat orientation
/// and near-zero paddle velocity with uniform jitter, so successive rebounds
/// decay toward rest and sweep the low-speed regime.
pub struct DecayPolicy {
    pub rng: ChaCha8Rng,
    pub tilt_jitter: f64,
    pub vel_jitter: f64,
}

impl Policy for DecayPolicy {
    fn plan(&mut self, _pre_impact: &SimState) -> Result<PlannedAction> {
        let mut u = |lim: f64| {
            if lim > 0.0 {
                self.rng.gen_range(-lim..lim)
            } else {
                0.0
            }
        };
        let action = Action {
            roll: u(self.tilt_jitter),
            pitch: u(self.tilt_jitter),
            paddle_vel: Vec3::new(u(self.vel_jitter), u(self.vel_jitter), u(self.vel_jitter)),
        };
        Ok(PlannedAction::bare(action))
    }
}
