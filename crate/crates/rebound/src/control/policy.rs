//! Episode policy that plans each contact with the action solver.

use crate::error::{Error, Result};
use crate::sim::{Action, PlannedAction, Policy, SimConfig, SimState, SolveSummary};

use super::solve::{solve_action, SolveOptions};
use super::{ControlTask, Dynamics};

/// Plans every bounce by solving the constrained placement problem through
/// `model`. Rejects the bounce when the solve aborts or ends infeasible,
/// which the episode driver records as a failure.
pub struct ControllerPolicy<'a> {
    model: &'a dyn Dynamics,
    task: ControlTask,
    sim: SimConfig,
    options: SolveOptions,
    warm_start: bool,
    last_action: Option<Action>,
}

impl<'a> ControllerPolicy<'a> {
    pub fn new(
        model: &'a dyn Dynamics,
        task: ControlTask,
        sim: SimConfig,
        options: SolveOptions,
        warm_start: bool,
    ) -> Result<ControllerPolicy<'a>> {
        task.validate()?;
        if model.input_dim() != crate::sim::MODEL_INPUT_DIM
            || model.output_dim() != crate::sim::MODEL_OUTPUT_DIM
        {
            return Err(Error::Config(format!(
                "controller model must map {} -> {}, got {} -> {}",
                crate::sim::MODEL_INPUT_DIM,
                crate::sim::MODEL_OUTPUT_DIM,
                model.input_dim(),
                model.output_dim(),
            )));
        }
        Ok(ControllerPolicy {
            model,
            task,
            sim,
            options,
            warm_start,
            last_action: None,
        })
    }

    pub fn task(&self) -> &ControlTask {
        &self.task
    }
}

impl Policy for ControllerPolicy<'_> {
    fn plan(&mut self, pre_impact: &SimState) -> Result<PlannedAction> {
        let mut options = self.options.clone();
        if self.warm_start {
            if let Some(last) = self.last_action {
                options.initial_action = Some(last);
            }
        }
        let (action, report) = solve_action(pre_impact, self.model, &self.task, &self.sim, &options)?;
        if report.aborted {
            return Err(Error::Solve("non-finite iterate".into()));
        }
        if !report.feasible {
            return Err(Error::Solve(format!(
                "violation {} above limit after {} iterations",
                report.max_violation, report.iterations
            )));
        }
        self.last_action = Some(action);
        Ok(PlannedAction {
            action,
            solve: Some(SolveSummary {
                cost: report.cost,
                max_violation: report.max_violation,
                iterations: report.iterations,
            }),
        })
    }
}
