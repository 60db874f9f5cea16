//! Primal-dual action solve for a single contact.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sim::{Action, SimConfig, SimState};
use crate::vec3::Vec3;

use super::point::evaluate_point;
use super::{ControlTask, CostEval, Dynamics, INFEASIBLE_FLIGHT_COST};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    /// Start here instead of the built-in default action.
    pub initial_action: Option<Action>,
    /// Initial value of every multiplier.
    pub lambda0: f64,
    /// Action step size, decayed geometrically per iteration.
    pub alpha_action: f64,
    pub alpha_decay: f64,
    /// Dual ascent rate.
    pub alpha_lambda: f64,
    /// Cap on the action movement per iteration. Near a fast incoming ball
    /// the landing shifts by tens of meters per radian of tilt, so one raw
    /// gradient step could throw the action far outside its boxes.
    pub max_step: f64,
    pub max_iterations: usize,
    /// Stop once the action moves less than this between iterations.
    pub tolerance: f64,
    /// A solve is feasible when no constraint exceeds this.
    pub violation_limit: f64,
}

impl Default for SolveOptions {
    fn default() -> SolveOptions {
        SolveOptions {
            initial_action: None,
            lambda0: 0.0,
            alpha_action: 0.05,
            alpha_decay: 0.99,
            alpha_lambda: 0.1,
            max_step: 0.1,
            max_iterations: 500,
            tolerance: 1e-5,
            violation_limit: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub cost: f64,
    /// Largest constraint value at the returned action, clamped at zero.
    pub max_violation: f64,
    pub iterations: usize,
    /// Step-size tolerance met before the iteration cap.
    pub converged: bool,
    pub feasible: bool,
    /// Hit a non-finite gradient or action and stopped early; the returned
    /// action is the last finite iterate.
    pub aborted: bool,
    /// Evaluations whose predicted rebound never returned to the plane.
    pub infeasible_flight_evals: usize,
}

/// Cold-start action: flat paddle moving straight up at the middle of the
/// task's speed band.
pub fn default_action(_state: &SimState, task: &ControlTask) -> Action {
    Action {
        roll: 0.0,
        pitch: 0.0,
        paddle_vel: Vec3::new(0.0, 0.0, 0.5 * (task.speed_band[0] + task.speed_band[1])),
    }
}

/// Minimizes the landing cost over the action subject to the task's
/// constraint rows: descend the action along the Lagrangian gradient with a
/// geometrically decaying step, ascend the multipliers along the constraint
/// values, project them to stay non-negative.
///
/// Returns the cheapest iterate that met the violation limit, not the last
/// one. Around an active constraint the iterates hover on both sides of the
/// boundary, so the final snapshot alone would fail the limit on many solves
/// whose path was full of good candidates.
pub fn solve_action(
    state: &SimState,
    model: &dyn Dynamics,
    task: &ControlTask,
    config: &SimConfig,
    options: &SolveOptions,
) -> Result<(Action, SolveReport)> {
    let mut action = options
        .initial_action
        .unwrap_or_else(|| default_action(state, task));
    let mut lambdas = vec![options.lambda0.max(0.0); task.constraint_count()];
    let mut iterations = 0;
    let mut converged = false;
    let mut aborted = false;
    let mut infeasible_flight_evals = 0;
    let mut incumbent: Option<(Action, f64, f64)> = None;
    let mut consider = |a: Action, cost: &CostEval, values: &[f64]| {
        let violation = values.iter().fold(0.0_f64, |m, v| m.max(*v));
        if violation <= options.violation_limit
            && cost.value.is_finite()
            && cost.value < INFEASIBLE_FLIGHT_COST
            && !cost.infeasible_flight
            && incumbent.as_ref().map_or(true, |(_, c, _)| cost.value < *c)
        {
            incumbent = Some((a, cost.value, violation));
        }
    };

    for k in 0..options.max_iterations {
        iterations = k + 1;
        let eval = evaluate_point(state, &action, model, task, config)?;
        if eval.cost.infeasible_flight {
            infeasible_flight_evals += 1;
        }
        consider(action, &eval.cost, &eval.constraints.values);
        let violation = eval
            .constraints
            .values
            .iter()
            .fold(0.0_f64, |m, v| m.max(*v));

        let mut grad = eval.cost.action_grad;
        for (i, row) in eval.constraints.action_jacobian.iter().enumerate() {
            let l = lambdas[i];
            if l != 0.0 {
                for (g, r) in grad.iter_mut().zip(row) {
                    *g += l * r;
                }
            }
        }
        if !grad.iter().all(|g| g.is_finite()) {
            aborted = true;
            break;
        }

        let mut step = options.alpha_action * options.alpha_decay.powi(k as i32);
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if options.max_step > 0.0 && step * gnorm > options.max_step {
            step = options.max_step / gnorm;
        }
        let a = action.to_array();
        let mut next = [0.0; 5];
        for i in 0..5 {
            next[i] = a[i] - step * grad[i];
        }
        // The tilt bounds are plain boxes, so project onto them instead of
        // waiting for their multipliers: a landing that wants more tilt than
        // the paddle has would otherwise drag the iterate past the bound and
        // spend the rest of the budget crawling back.
        next[0] = next[0].clamp(task.roll_bounds[0], task.roll_bounds[1]);
        next[1] = next[1].clamp(task.pitch_bounds[0], task.pitch_bounds[1]);
        let mut moved2 = 0.0;
        for i in 0..5 {
            moved2 += (next[i] - a[i]) * (next[i] - a[i]);
        }
        let candidate = Action::from_slice(&next).expect("fixed length");
        if !candidate.is_finite() {
            aborted = true;
            break;
        }

        for (l, g) in lambdas.iter_mut().zip(&eval.constraints.values) {
            *l = (*l + options.alpha_lambda * g).max(0.0);
        }

        action = candidate;
        // A small step only ends the solve at a feasible iterate with a real
        // landing. At an infeasible one the Lagrangian gradient can vanish
        // while the duals are still warming up (fresh multipliers on a
        // warm-started action), so the loop must keep running until the
        // ascent takes hold.
        if moved2.sqrt() < options.tolerance
            && violation <= options.violation_limit
            && !eval.cost.infeasible_flight
        {
            converged = true;
            break;
        }
    }

    let final_eval = evaluate_point(state, &action, model, task, config)?;
    if final_eval.cost.infeasible_flight {
        infeasible_flight_evals += 1;
    }
    consider(action, &final_eval.cost, &final_eval.constraints.values);

    let (action, cost, max_violation, flight_ok) = match incumbent {
        Some((a, c, v)) if !aborted => (a, c, v, true),
        _ => {
            let max_violation = final_eval
                .constraints
                .values
                .iter()
                .fold(0.0_f64, |m, v| m.max(*v));
            (
                action,
                final_eval.cost.value,
                max_violation,
                !final_eval.cost.infeasible_flight,
            )
        }
    };
    let feasible = !aborted
        && max_violation <= options.violation_limit
        && cost.is_finite()
        && flight_ok;
    Ok((
        action,
        SolveReport {
            cost,
            max_violation,
            iterations,
            converged,
            feasible,
            aborted,
            infeasible_flight_evals,
        },
    ))
}
