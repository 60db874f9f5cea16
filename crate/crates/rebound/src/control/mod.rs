//! Gradient-based action selection through a learned or analytic forward
//! model.
//!
//! The controller treats one contact as a differentiable chain: action to
//! predicted rebound velocity (the model), rebound velocity to landing point
//! (closed-form ballistics), landing point to cost and obstacle terms. A
//! primal-dual loop descends the action along the Lagrangian gradient while
//! ascending the multipliers on the constraint values.

mod landing;
mod models;
mod point;
mod policy;
mod rollout;
mod solve;

pub use landing::{landing_point, Landing};
pub use models::{AnalyticDynamics, ResidualDynamics};
pub use point::{control_constraints, control_cost, ConstraintEval, CostEval};
pub use policy::ControllerPolicy;
pub use rollout::{
    rollout_lagrangian, solve_rollout, RolloutDuals, RolloutEval, RolloutFinalConstraints,
    RolloutFinalCost, RolloutProblem, RolloutStepConstraints, RolloutStepCost,
};
pub use solve::{solve_action, SolveOptions, SolveReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::MlpModel;

/// Cost assigned to actions whose predicted rebound never returns to the hit
/// plane. No gradient is available there.
pub const INFEASIBLE_FLIGHT_COST: f64 = 1e3;

/// Forward model the controller differentiates through.
pub trait Dynamics {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn predict(&self, input: &[f64]) -> Result<Vec<f64>>;
    /// Gradient of `upstream . predict(input)` with respect to the input.
    fn input_vjp(&self, input: &[f64], upstream: &[f64]) -> Result<Vec<f64>>;
}

impl Dynamics for MlpModel {
    fn input_dim(&self) -> usize {
        MlpModel::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        MlpModel::output_dim(self)
    }

    fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward(input)
    }

    fn input_vjp(&self, input: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        self.input_gradient(input, upstream)
    }
}

/// Axis-aligned keep-out rectangle in the hit plane. Landings must clear it
/// by `margin`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectObstacle {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    #[serde(default)]
    pub margin: f64,
}

impl RectObstacle {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(Error::Config(format!(
                "obstacle has empty extent: x [{}, {}], y [{}, {}]",
                self.x_min, self.x_max, self.y_min, self.y_max
            )));
        }
        if self.margin < 0.0 {
            return Err(Error::Config("obstacle margin must be non-negative".into()));
        }
        Ok(())
    }
}

/// Piecewise-linear clearance of `p` from the rectangle: positive outside,
/// negative inside, zero on the boundary.
pub fn rect_clearance(p: [f64; 2], rect: &RectObstacle) -> f64 {
    let qx = (rect.x_min - p[0]).max(p[0] - rect.x_max);
    let qy = (rect.y_min - p[1]).max(p[1] - rect.y_max);
    qx.max(qy)
}

/// Subgradient of [`rect_clearance`]: the active face decides the direction;
/// ties resolve to the x term, and within a term to its first branch.
pub fn rect_clearance_grad(p: [f64; 2], rect: &RectObstacle) -> [f64; 2] {
    let qx_lo = rect.x_min - p[0];
    let qx_hi = p[0] - rect.x_max;
    let qy_lo = rect.y_min - p[1];
    let qy_hi = p[1] - rect.y_max;
    let qx = qx_lo.max(qx_hi);
    let qy = qy_lo.max(qy_hi);
    if qx >= qy {
        if qx_lo >= qx_hi {
            [-1.0, 0.0]
        } else {
            [1.0, 0.0]
        }
    } else if qy_lo >= qy_hi {
        [0.0, -1.0]
    } else {
        [0.0, 1.0]
    }
}

/// One contact-placement task: where the rebound should land and what the
/// action must respect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlTask {
    pub p_desired: [f64; 2],
    /// `[min, max]` commanded roll.
    pub roll_bounds: [f64; 2],
    /// `[min, max]` commanded pitch.
    pub pitch_bounds: [f64; 2],
    /// `[min, max]` allowed relative speed between ball and paddle at
    /// contact.
    pub speed_band: [f64; 2],
    /// Slowest predicted vertical rebound the solve will accept. Rebounds
    /// below it count as infeasible flights: they barely leave the plane, so
    /// their "landing" sits at the contact point and a solve chasing a nearby
    /// target would happily kill the ball there. The margin also absorbs
    /// model error before the plant's own dead-rebound cutoff.
    #[serde(default = "default_min_rebound_vz")]
    pub min_rebound_vz: f64,
    #[serde(default)]
    pub obstacles: Vec<RectObstacle>,
}

fn default_min_rebound_vz() -> f64 {
    0.5
}

impl ControlTask {
    /// Rows: roll above max, roll below min, pitch above max, pitch below
    /// min, speed below band, speed above band, then one clearance row per
    /// obstacle. All rows are feasible at or below zero.
    pub fn constraint_count(&self) -> usize {
        6 + self.obstacles.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.roll_bounds[0] <= self.roll_bounds[1]) {
            return Err(Error::Config("roll_bounds out of order".into()));
        }
        if !(self.pitch_bounds[0] <= self.pitch_bounds[1]) {
            return Err(Error::Config("pitch_bounds out of order".into()));
        }
        if !(0.0 <= self.speed_band[0] && self.speed_band[0] <= self.speed_band[1]) {
            return Err(Error::Config("speed_band out of order".into()));
        }
        if !(self.min_rebound_vz >= 0.0) {
            return Err(Error::Config("min_rebound_vz must be non-negative".into()));
        }
        if !(self.p_desired[0].is_finite() && self.p_desired[1].is_finite()) {
            return Err(Error::Config("p_desired must be finite".into()));
        }
        for o in &self.obstacles {
            o.validate()?;
        }
        Ok(())
    }
}
