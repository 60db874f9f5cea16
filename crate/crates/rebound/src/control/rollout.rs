//! Multi-step Lagrangian through a chained forward model.
//!
//! The chain is `s_{t+1} = model(s_t, a_t)` for `t = 1..T-1`. The Lagrangian
//! sums a final cost and final constraint rows at `s_T` with per-step costs
//! and constraint rows at each `(s_t, a_t)`. Gradients with respect to every
//! action come from one reverse sweep: the adjoint at `s_{t+1}` is pulled
//! back through the model, split into its state and action parts, and the
//! direct step terms are added on.

use crate::error::{Error, Result};
use crate::sim::SimConfig;
use crate::vec3::Vec3;

use super::landing::landing_point;
use super::{rect_clearance, rect_clearance_grad, ControlTask, Dynamics, INFEASIBLE_FLIGHT_COST};

#[derive(Clone, Debug)]
pub enum RolloutStepCost {
    Zero,
    /// `0.5 * weight * ||a||^2`
    ActionEffort { weight: f64 },
}

impl RolloutStepCost {
    fn value(&self, _s: &[f64], a: &[f64]) -> f64 {
        match self {
            RolloutStepCost::Zero => 0.0,
            RolloutStepCost::ActionEffort { weight } => {
                0.5 * weight * a.iter().map(|x| x * x).sum::<f64>()
            }
        }
    }

    fn add_grads(&self, _s: &[f64], a: &[f64], gs: &mut [f64], ga: &mut [f64]) {
        match self {
            RolloutStepCost::Zero => {}
            RolloutStepCost::ActionEffort { weight } => {
                for (g, x) in ga.iter_mut().zip(a) {
                    *g += weight * x;
                }
                let _ = gs;
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum RolloutFinalCost {
    /// Horizontal distance between the target and the landing of a ball
    /// released at `from` with the final state as its velocity. States that
    /// climb slower than `min_rebound_vz` are infeasible flights; their
    /// penalty slopes along the vertical speed so the solve can leave the
    /// region, matching [`super::control_cost`].
    LandingDistance {
        from: Vec3,
        target: [f64; 2],
        min_rebound_vz: f64,
    },
    /// `0.5 * ||s - target||^2`
    QuadraticError { target: Vec<f64> },
}

impl RolloutFinalCost {
    /// Value, gradient in the final state, and whether the state was an
    /// infeasible flight.
    fn value_and_grad(&self, s: &[f64], config: &SimConfig) -> (f64, Vec<f64>, bool) {
        match self {
            RolloutFinalCost::LandingDistance {
                from,
                target,
                min_rebound_vz,
            } => {
                let v = Vec3::from_slice(s);
                let landing = if v.z >= *min_rebound_vz {
                    landing_point(*from, v, config).ok()
                } else {
                    None
                };
                match landing {
                    Some(l) => {
                        let dx = l.point[0] - target[0];
                        let dy = l.point[1] - target[1];
                        let dist = dx.hypot(dy);
                        if dist == 0.0 {
                            return (0.0, vec![0.0; s.len()], false);
                        }
                        let dp = [dx / dist, dy / dist];
                        let grad = (0..3)
                            .map(|j| {
                                dp[0] * l.jacobian[0][3 + j] + dp[1] * l.jacobian[1][3 + j]
                            })
                            .collect();
                        (dist, grad, false)
                    }
                    None => {
                        let mut grad = vec![0.0; s.len()];
                        grad[2] = -1.0;
                        (INFEASIBLE_FLIGHT_COST + (min_rebound_vz - v.z), grad, true)
                    }
                }
            }
            RolloutFinalCost::QuadraticError { target } => {
                let value = 0.5
                    * s.iter()
                        .zip(target)
                        .map(|(x, t)| (x - t) * (x - t))
                        .sum::<f64>();
                let grad = s.iter().zip(target).map(|(x, t)| x - t).collect();
                (value, grad, false)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum RolloutStepConstraints {
    None,
    /// The single-contact rows: roll and pitch boxes on the action, then the
    /// closing-speed band on the state entering the contact relative to the
    /// commanded paddle, `s_t - paddle_vel`. Same ordering as
    /// [`super::control_constraints`] without the obstacle rows.
    Contact { task: ControlTask },
}

impl RolloutStepConstraints {
    fn count(&self) -> usize {
        match self {
            RolloutStepConstraints::None => 0,
            RolloutStepConstraints::Contact { .. } => 6,
        }
    }

    fn values(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        match self {
            RolloutStepConstraints::None => Vec::new(),
            RolloutStepConstraints::Contact { task } => {
                let v_rel = Vec3::from_slice(s) - Vec3::new(a[2], a[3], a[4]);
                let speed = v_rel.norm();
                vec![
                    a[0] - task.roll_bounds[1],
                    task.roll_bounds[0] - a[0],
                    a[1] - task.pitch_bounds[1],
                    task.pitch_bounds[0] - a[1],
                    task.speed_band[0] - speed,
                    speed - task.speed_band[1],
                ]
            }
        }
    }

    /// Projects an action onto the rows that are plain boxes, mirroring the
    /// tilt clamp in [`super::solve_action`].
    fn project(&self, a: &mut [f64]) {
        match self {
            RolloutStepConstraints::None => {}
            RolloutStepConstraints::Contact { task } => {
                a[0] = a[0].clamp(task.roll_bounds[0], task.roll_bounds[1]);
                a[1] = a[1].clamp(task.pitch_bounds[0], task.pitch_bounds[1]);
            }
        }
    }

    /// Adds `sum_i lambda_i * d row_i / d(s_t, a_t)` into the state gradient
    /// at `s_t` and the action gradient. The rows read the state entering
    /// the contact, so the caller applies this after pulling the adjoint
    /// back through the model.
    fn add_weighted_grads(
        &self,
        s: &[f64],
        a: &[f64],
        lambdas: &[f64],
        gs: &mut [f64],
        ga: &mut [f64],
    ) {
        match self {
            RolloutStepConstraints::None => {}
            RolloutStepConstraints::Contact { .. } => {
                ga[0] += lambdas[0] - lambdas[1];
                ga[1] += lambdas[2] - lambdas[3];
                let v_rel = Vec3::from_slice(s) - Vec3::new(a[2], a[3], a[4]);
                let speed = v_rel.norm();
                if speed > 0.0 {
                    let w = (lambdas[5] - lambdas[4]) / speed;
                    gs[0] += w * v_rel.x;
                    gs[1] += w * v_rel.y;
                    gs[2] += w * v_rel.z;
                    ga[2] -= w * v_rel.x;
                    ga[3] -= w * v_rel.y;
                    ga[4] -= w * v_rel.z;
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum RolloutFinalConstraints {
    None,
    /// Obstacle clearance rows on the landing of the final state, released
    /// at `from`.
    Obstacles { from: Vec3, task: ControlTask },
}

impl RolloutFinalConstraints {
    fn count(&self) -> usize {
        match self {
            RolloutFinalConstraints::None => 0,
            RolloutFinalConstraints::Obstacles { task, .. } => task.obstacles.len(),
        }
    }

    fn values(&self, s: &[f64], config: &SimConfig) -> Vec<f64> {
        match self {
            RolloutFinalConstraints::None => Vec::new(),
            RolloutFinalConstraints::Obstacles { from, task } => {
                match landing_point(*from, Vec3::from_slice(s), config) {
                    Ok(l) => task
                        .obstacles
                        .iter()
                        .map(|rect| rect.margin - rect_clearance(l.point, rect))
                        .collect(),
                    Err(_) => vec![0.0; task.obstacles.len()],
                }
            }
        }
    }

    fn add_weighted_grads(&self, s: &[f64], lambdas: &[f64], gs: &mut [f64], config: &SimConfig) {
        match self {
            RolloutFinalConstraints::None => {}
            RolloutFinalConstraints::Obstacles { from, task } => {
                let Ok(l) = landing_point(*from, Vec3::from_slice(s), config) else {
                    return;
                };
                for (rect, lambda) in task.obstacles.iter().zip(lambdas) {
                    if *lambda == 0.0 {
                        continue;
                    }
                    let dq = rect_clearance_grad(l.point, rect);
                    let dp = [-lambda * dq[0], -lambda * dq[1]];
                    for j in 0..3 {
                        gs[j] += dp[0] * l.jacobian[0][3 + j] + dp[1] * l.jacobian[1][3 + j];
                    }
                }
            }
        }
    }
}

/// Term bundle for a rollout Lagrangian.
pub struct RolloutProblem<'a> {
    pub model: &'a dyn Dynamics,
    pub step_cost: RolloutStepCost,
    pub final_cost: RolloutFinalCost,
    pub step_constraints: RolloutStepConstraints,
    pub final_constraints: RolloutFinalConstraints,
}

/// Multipliers: one vector per step plus one for the final rows.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutDuals {
    pub step: Vec<Vec<f64>>,
    pub final_rows: Vec<f64>,
}

impl RolloutDuals {
    pub fn zeros(problem: &RolloutProblem, steps: usize) -> RolloutDuals {
        RolloutDuals {
            step: vec![vec![0.0; problem.step_constraints.count()]; steps],
            final_rows: vec![0.0; problem.final_constraints.count()],
        }
    }
}

#[derive(Clone, Debug)]
pub struct RolloutEval {
    pub value: f64,
    pub action_grads: Vec<Vec<f64>>,
    pub step_values: Vec<Vec<f64>>,
    pub final_values: Vec<f64>,
    /// Predicted states `s_2 .. s_T`.
    pub states: Vec<Vec<f64>>,
}

/// Value and action gradients of the rollout Lagrangian at `(s1, actions)`.
pub fn rollout_lagrangian(
    s1: &[f64],
    actions: &[Vec<f64>],
    duals: &RolloutDuals,
    problem: &RolloutProblem,
    config: &SimConfig,
) -> Result<RolloutEval> {
    let model = problem.model;
    let state_dim = model.output_dim();
    if s1.len() != state_dim {
        return Err(Error::DimMismatch {
            context: "rollout initial state",
            expected: state_dim,
            got: s1.len(),
        });
    }
    if actions.is_empty() {
        return Err(Error::HorizonMismatch {
            horizon: 1,
            expected: 1,
            got: 0,
        });
    }
    if duals.step.len() != actions.len() {
        return Err(Error::HorizonMismatch {
            horizon: actions.len() + 1,
            expected: actions.len(),
            got: duals.step.len(),
        });
    }
    let action_dim = model.input_dim() - state_dim;
    let n_final = problem.final_constraints.count();
    if duals.final_rows.len() != n_final {
        return Err(Error::DimMismatch {
            context: "final-row multipliers",
            expected: n_final,
            got: duals.final_rows.len(),
        });
    }

    // Forward chain.
    let mut states: Vec<Vec<f64>> = vec![s1.to_vec()];
    let mut input = vec![0.0; model.input_dim()];
    for (t, a) in actions.iter().enumerate() {
        if a.len() != action_dim {
            return Err(Error::DimMismatch {
                context: "rollout action",
                expected: action_dim,
                got: a.len(),
            });
        }
        input[..state_dim].copy_from_slice(&states[t]);
        input[state_dim..].copy_from_slice(a);
        states.push(model.predict(&input)?);
    }
    let s_final = states.last().unwrap();

    // Value.
    let (final_cost, final_cost_grad) = problem.final_cost.value_and_grad(s_final, config);
    let final_values = problem.final_constraints.values(s_final, config);
    let mut value = final_cost;
    for (l, g) in duals.final_rows.iter().zip(&final_values) {
        value += l * g;
    }
    let mut step_values = Vec::with_capacity(actions.len());
    for (t, a) in actions.iter().enumerate() {
        value += problem.step_cost.value(&states[t], a);
        let rows = problem.step_constraints.values(&states[t], a);
        if duals.step[t].len() != rows.len() {
            return Err(Error::DimMismatch {
                context: "step-row multipliers",
                expected: rows.len(),
                got: duals.step[t].len(),
            });
        }
        for (l, g) in duals.step[t].iter().zip(&rows) {
            value += l * g;
        }
        step_values.push(rows);
    }
    if !value.is_finite() {
        return Err(Error::NonFinite("rollout lagrangian".into()));
    }

    // Reverse sweep.
    let mut adjoint = final_cost_grad;
    problem
        .final_constraints
        .add_weighted_grads(s_final, &duals.final_rows, &mut adjoint, config);
    let mut action_grads = vec![vec![0.0; action_dim]; actions.len()];
    for t in (0..actions.len()).rev() {
        let ga = &mut action_grads[t];
        input[..state_dim].copy_from_slice(&states[t]);
        input[state_dim..].copy_from_slice(&actions[t]);
        let pulled = model.input_vjp(&input, &adjoint)?;
        let mut gs = pulled[..state_dim].to_vec();
        for (g, p) in ga.iter_mut().zip(&pulled[state_dim..]) {
            *g += p;
        }
        // This step's constraint rows read the state entering the contact,
        // so they join the state gradient after the model pullback.
        problem.step_constraints.add_weighted_grads(
            &states[t],
            &actions[t],
            &duals.step[t],
            &mut gs,
            ga,
        );
        problem
            .step_cost
            .add_grads(&states[t], &actions[t], &mut gs, ga);
        adjoint = gs;
    }

    Ok(RolloutEval {
        value,
        action_grads,
        step_values,
        final_values,
        states: states[1..].to_vec(),
    })
}

/// Primal-dual solve over the whole action sequence, mirroring the
/// single-contact solver: descend every action along its Lagrangian
/// gradient with a decaying step, ascend all multipliers along their row
/// values, project them non-negative.
pub fn solve_rollout(
    s1: &[f64],
    initial_actions: &[Vec<f64>],
    problem: &RolloutProblem,
    config: &SimConfig,
    options: &super::SolveOptions,
) -> Result<(Vec<Vec<f64>>, super::SolveReport)> {
    let mut actions: Vec<Vec<f64>> = initial_actions.to_vec();
    let mut duals = RolloutDuals::zeros(problem, actions.len());
    for row in &mut duals.step {
        row.fill(options.lambda0.max(0.0));
    }
    duals.final_rows.fill(options.lambda0.max(0.0));

    let mut iterations = 0;
    let mut converged = false;
    let mut aborted = false;
    // Cheapest iterate meeting the violation limit, as in `solve_action`.
    let mut incumbent: Option<(Vec<Vec<f64>>, f64, f64)> = None;
    let mut consider =
        |a: &[Vec<f64>], eval: &RolloutEval, duals: &RolloutDuals| {
            let violation = eval
                .step_values
                .iter()
                .flatten()
                .chain(eval.final_values.iter())
                .fold(0.0_f64, |m, v| m.max(*v));
            let mut cost = eval.value;
            for (row, vals) in duals.step.iter().zip(&eval.step_values) {
                for (l, v) in row.iter().zip(vals) {
                    cost -= l * v;
                }
            }
            for (l, v) in duals.final_rows.iter().zip(&eval.final_values) {
                cost -= l * v;
            }
            if violation <= options.violation_limit
                && cost.is_finite()
                && cost < INFEASIBLE_FLIGHT_COST
                && incumbent.as_ref().map_or(true, |(_, c, _)| cost < *c)
            {
                incumbent = Some((a.to_vec(), cost, violation));
            }
        };

    for k in 0..options.max_iterations {
        iterations = k + 1;
        let eval = rollout_lagrangian(s1, &actions, &duals, problem, config)?;
        consider(&actions, &eval, &duals);
        let violation = eval
            .step_values
            .iter()
            .flatten()
            .chain(eval.final_values.iter())
            .fold(0.0_f64, |m, v| m.max(*v));
        if !eval
            .action_grads
            .iter()
            .all(|g| g.iter().all(|v| v.is_finite()))
        {
            aborted = true;
            break;
        }
        let mut step = options.alpha_action * options.alpha_decay.powi(k as i32);
        let gnorm = eval
            .action_grads
            .iter()
            .flatten()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        if options.max_step > 0.0 && step * gnorm > options.max_step {
            step = options.max_step / gnorm;
        }
        let mut moved2 = 0.0;
        for (a, g) in actions.iter_mut().zip(&eval.action_grads) {
            for (x, gv) in a.iter_mut().zip(g) {
                let nx = *x - step * gv;
                moved2 += (nx - *x) * (nx - *x);
                *x = nx;
            }
        }
        for (row, vals) in duals.step.iter_mut().zip(&eval.step_values) {
            for (l, v) in row.iter_mut().zip(vals) {
                *l = (*l + options.alpha_lambda * v).max(0.0);
            }
        }
        for (l, v) in duals.final_rows.iter_mut().zip(&eval.final_values) {
            *l = (*l + options.alpha_lambda * v).max(0.0);
        }
        // Same rule as `solve_action`: a small step at an infeasible iterate
        // means the duals have not caught up yet, not that the solve is done.
        if moved2.sqrt() < options.tolerance && violation <= options.violation_limit {
            converged = true;
            break;
        }
    }

    let zero_duals = RolloutDuals::zeros(problem, actions.len());
    let final_eval = rollout_lagrangian(s1, &actions, &zero_duals, problem, config)?;
    consider(&actions, &final_eval, &zero_duals);

    let (actions, cost, max_violation) = match incumbent {
        Some((a, c, v)) if !aborted => (a, c, v),
        _ => {
            let max_violation = final_eval
                .step_values
                .iter()
                .flatten()
                .chain(final_eval.final_values.iter())
                .fold(0.0_f64, |m, v| m.max(*v));
            (actions, final_eval.value, max_violation)
        }
    };
    let report = super::SolveReport {
        cost,
        max_violation,
        iterations,
        converged,
        feasible: !aborted && max_violation <= options.violation_limit && cost.is_finite(),
        aborted,
        infeasible_flight_evals: 0,
    };
    Ok((actions, report))
}
