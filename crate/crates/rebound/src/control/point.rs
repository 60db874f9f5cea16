//! Single-contact cost and constraint evaluation with action gradients.

use crate::error::Result;
use crate::sim::{Action, SimConfig, SimState};
use crate::vec3::Vec3;

use super::landing::landing_point;
use super::{rect_clearance, rect_clearance_grad, ControlTask, Dynamics, INFEASIBLE_FLIGHT_COST};

/// Landing-distance cost at one `(state, action)` point.
#[derive(Clone, Debug)]
pub struct CostEval {
    pub value: f64,
    /// Gradient in the action layout `[roll, pitch, vx, vy, vz]`.
    pub action_grad: [f64; 5],
    /// Predicted landing, absent when the predicted rebound never returns to
    /// the plane.
    pub landing: Option<[f64; 2]>,
    pub infeasible_flight: bool,
}

/// Constraint rows at one point; see [`ControlTask::constraint_count`] for
/// the ordering.
#[derive(Clone, Debug)]
pub struct ConstraintEval {
    pub values: Vec<f64>,
    pub action_jacobian: Vec<[f64; 5]>,
}

pub(super) struct PointEval {
    pub cost: CostEval,
    pub constraints: ConstraintEval,
}

/// Evaluates cost and every constraint row with one model prediction. The
/// prediction feeds the landing point and the obstacle rows; the box and
/// speed-band rows are model-free.
pub(super) fn evaluate_point(
    state: &SimState,
    action: &Action,
    model: &dyn Dynamics,
    task: &ControlTask,
    config: &SimConfig,
) -> Result<PointEval> {
    let input = [
        state.ball_vel.x,
        state.ball_vel.y,
        state.ball_vel.z,
        action.roll,
        action.pitch,
        action.paddle_vel.x,
        action.paddle_vel.y,
        action.paddle_vel.z,
    ];
    let pred = model.predict(&input)?;
    let v_out = Vec3::from_slice(&pred);

    let landing = if v_out.z >= task.min_rebound_vz {
        landing_point(state.ball_pos, v_out, config).ok()
    } else {
        None
    };

    // Gradient of a scalar in the landing point, pulled back to the action
    // through the ballistics Jacobian and the model.
    let pull_back = |dp: [f64; 2]| -> Result<[f64; 5]> {
        let l = landing.as_ref().expect("caller checked feasibility");
        // Velocity block of the landing Jacobian (columns 3..6).
        let upstream = [
            dp[0] * l.jacobian[0][3] + dp[1] * l.jacobian[1][3],
            dp[0] * l.jacobian[0][4] + dp[1] * l.jacobian[1][4],
            dp[0] * l.jacobian[0][5] + dp[1] * l.jacobian[1][5],
        ];
        let g = model.input_vjp(&input, &upstream)?;
        Ok([g[3], g[4], g[5], g[6], g[7]])
    };

    let cost = match &landing {
        Some(l) => {
            let dx = l.point[0] - task.p_desired[0];
            let dy = l.point[1] - task.p_desired[1];
            let dist = dx.hypot(dy);
            let action_grad = if dist > 0.0 {
                pull_back([dx / dist, dy / dist])?
            } else {
                [0.0; 5]
            };
            CostEval {
                value: dist,
                action_grad,
                landing: Some(l.point),
                infeasible_flight: false,
            }
        }
        None => {
            // The penalty slopes along the predicted vertical speed. A flat
            // plateau here would trap the solve: a warm-started action whose
            // prediction points down has no landing to differentiate, and
            // with a zero gradient it would sit there forever.
            let g = model.input_vjp(&input, &[0.0, 0.0, -1.0])?;
            CostEval {
                value: INFEASIBLE_FLIGHT_COST + (task.min_rebound_vz - v_out.z),
                action_grad: [g[3], g[4], g[5], g[6], g[7]],
                landing: None,
                infeasible_flight: true,
            }
        }
    };

    let mut values = Vec::with_capacity(task.constraint_count());
    let mut jac: Vec<[f64; 5]> = Vec::with_capacity(task.constraint_count());

    values.push(action.roll - task.roll_bounds[1]);
    jac.push([1.0, 0.0, 0.0, 0.0, 0.0]);
    values.push(task.roll_bounds[0] - action.roll);
    jac.push([-1.0, 0.0, 0.0, 0.0, 0.0]);
    values.push(action.pitch - task.pitch_bounds[1]);
    jac.push([0.0, 1.0, 0.0, 0.0, 0.0]);
    values.push(task.pitch_bounds[0] - action.pitch);
    jac.push([0.0, -1.0, 0.0, 0.0, 0.0]);

    // Speed band on the closing velocity: the ball's velocity at the hit
    // plane relative to the commanded paddle. This row is model-free, so it
    // holds in the real system whatever the model believes, and it forbids
    // contacts too soft (or too violent) to juggle with. At exactly zero
    // relative speed the norm has no gradient; use the zero subgradient.
    let v_rel = state.ball_vel - action.paddle_vel;
    let speed = v_rel.norm();
    let ds_dpv = if speed > 0.0 {
        [-v_rel.x / speed, -v_rel.y / speed, -v_rel.z / speed]
    } else {
        [0.0; 3]
    };
    values.push(task.speed_band[0] - speed);
    jac.push([0.0, 0.0, -ds_dpv[0], -ds_dpv[1], -ds_dpv[2]]);
    values.push(speed - task.speed_band[1]);
    jac.push([0.0, 0.0, ds_dpv[0], ds_dpv[1], ds_dpv[2]]);

    // Obstacle clearance rows vanish when the landing is undefined; the
    // flight penalty already dominates the cost there.
    for rect in &task.obstacles {
        match &landing {
            Some(l) => {
                let q = rect_clearance(l.point, rect);
                values.push(rect.margin - q);
                let dq = rect_clearance_grad(l.point, rect);
                jac.push(pull_back([-dq[0], -dq[1]])?);
            }
            None => {
                values.push(0.0);
                jac.push([0.0; 5]);
            }
        }
    }

    Ok(PointEval {
        cost,
        constraints: ConstraintEval {
            values,
            action_jacobian: jac,
        },
    })
}

/// Distance between the predicted landing and the task target, with its
/// action gradient.
pub fn control_cost(
    state: &SimState,
    action: &Action,
    model: &dyn Dynamics,
    task: &ControlTask,
    config: &SimConfig,
) -> Result<CostEval> {
    Ok(evaluate_point(state, action, model, task, config)?.cost)
}

/// All constraint rows with their action Jacobian.
pub fn control_constraints(
    state: &SimState,
    action: &Action,
    model: &dyn Dynamics,
    task: &ControlTask,
    config: &SimConfig,
) -> Result<ConstraintEval> {
    Ok(evaluate_point(state, action, model, task, config)?.constraints)
}
