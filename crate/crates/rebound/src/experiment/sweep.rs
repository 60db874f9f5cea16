//! Sensitivity sweep over the analytic model's roll offset.
//!
//! One raw dataset serves every level: the recorded transitions do not
//! depend on what the planner believed, only the residual labels do. Each
//! level retrains the constrained residual arm against its own analytic
//! baseline, then both that arm and the bare analytic model run the same
//! paired evaluation episodes.

use serde::{Deserialize, Serialize};

use crate::config::{ModelMode, ObjectiveKind, RunConfig};
use crate::control::AnalyticDynamics;
use crate::error::Result;
use crate::learn::Transition;

use super::{evaluate_arm, train_model, EvalSummary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepArm {
    Analytic,
    Residual,
}

impl SweepArm {
    pub fn label(self) -> &'static str {
        match self {
            SweepArm::Analytic => "analytic",
            SweepArm::Residual => "residual",
        }
    }
}

/// One (roll error, arm) cell of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub roll_error: f64,
    pub arm: SweepArm,
    pub summary: EvalSummary,
}

/// Copy of `run` with the analytic roll offset replaced and the arm pinned
/// to constrained residual training.
fn level_run(run: &RunConfig, roll_error: f64) -> RunConfig {
    let mut level = run.clone();
    level.experiment.analytic_roll_error = roll_error;
    level.experiment.mode = ModelMode::Residual;
    level.experiment.objective = ObjectiveKind::Constrained;
    level
}

pub fn roll_error_sweep(dataset: &[Transition], run: &RunConfig) -> Result<Vec<SweepRow>> {
    let episodes = run.experiment.sweep_episodes;
    let mut rows = Vec::with_capacity(2 * run.experiment.sweep_roll_errors.len());
    for &roll_error in &run.experiment.sweep_roll_errors {
        let level = level_run(run, roll_error);
        let sim = level.effective_sim();

        let analytic = AnalyticDynamics::faulty(&sim);
        let (_, summary) = evaluate_arm(&analytic, &level, episodes)?;
        rows.push(SweepRow {
            roll_error,
            arm: SweepArm::Analytic,
            summary,
        });

        let trained = train_model(dataset, &level)?;
        let deployed = super::deploy_trained(&trained, &level)?;
        let (_, summary) = evaluate_arm(&deployed, &level, episodes)?;
        rows.push(SweepRow {
            roll_error,
            arm: SweepArm::Residual,
            summary,
        });
    }
    Ok(rows)
}
