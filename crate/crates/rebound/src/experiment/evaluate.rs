//! Closed-loop evaluation: run the controller through a model over a fixed
//! set of episodes and score landing accuracy and failures.
//!
//! Episode `i` always draws its task and initial condition from stream `i`
//! of the master seed, so every arm evaluated at the same seed faces the
//! identical sequence of tasks. Differences in the rows are then down to
//! the model, not the draw.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::control::{ControllerPolicy, Dynamics};
use crate::error::Result;
use crate::rng::episode_stream;
use crate::sim::{run_episode, FailureKind, Termination};

use super::{sample_episode, solve_options};

/// One evaluated episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: u64,
    pub bounces: usize,
    pub termination: Termination,
    /// Mean landing distance from the target over the episode's bounces;
    /// absent when nothing was recorded before termination.
    pub mean_error: Option<f64>,
    pub sim_time: f64,
}

impl EpisodeRow {
    pub fn failed(&self) -> bool {
        self.termination.is_failure()
    }

    pub fn termination_label(&self) -> &'static str {
        match self.termination {
            Termination::Completed => "completed",
            Termination::Failure(FailureKind::BelowPlane) => "below_plane",
            Termination::Failure(FailureKind::OutOfWorkspace) => "out_of_workspace",
            Termination::Failure(FailureKind::PolicyRejected) => "solve_rejected",
            Termination::Failure(FailureKind::NonFiniteAction) => "non_finite_action",
            Termination::Failure(FailureKind::NoContact) => "no_contact",
        }
    }
}

/// Aggregate over one arm's episodes. Error statistics cover completed
/// episodes only; a failed episode contributes to `failure_rate`, not to
/// the mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub failures: usize,
    pub failure_rate: f64,
    /// Mean over completed episodes of the per-episode time-averaged
    /// landing error.
    pub mean_error: Option<f64>,
    /// Sample standard deviation of the same per-episode values.
    pub std_error: Option<f64>,
}

pub fn summarize(rows: &[EpisodeRow]) -> EvalSummary {
    let failures = rows.iter().filter(|r| r.failed()).count();
    let errors: Vec<f64> = rows
        .iter()
        .filter(|r| !r.failed())
        .filter_map(|r| r.mean_error)
        .collect();
    let mean_error = if errors.is_empty() {
        None
    } else {
        Some(errors.iter().sum::<f64>() / errors.len() as f64)
    };
    let std_error = match (errors.len(), mean_error) {
        (n, Some(m)) if n >= 2 => {
            let var = errors.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / (n as f64 - 1.0);
            Some(var.sqrt())
        }
        _ => None,
    };
    EvalSummary {
        episodes: rows.len(),
        failures,
        failure_rate: if rows.is_empty() {
            0.0
        } else {
            failures as f64 / rows.len() as f64
        },
        mean_error,
        std_error,
    }
}

/// Time-averaged distance to the target: each contact's landing error is
/// weighted by the flight time that led to it.
fn episode_error(trace: &crate::sim::EpisodeTrace) -> Option<f64> {
    let last = trace.bounces.last()?;
    if last.time <= 0.0 {
        return None;
    }
    let mut weighted = 0.0;
    let mut prev = 0.0;
    for b in &trace.bounces {
        weighted += (b.time - prev) * b.target_error;
        prev = b.time;
    }
    Some(weighted / last.time)
}

/// Evaluates `model` on `episodes` paired tasks drawn from `run.seed`.
pub fn evaluate_arm(
    model: &dyn Dynamics,
    run: &RunConfig,
    episodes: usize,
) -> Result<(Vec<EpisodeRow>, EvalSummary)> {
    let sim = run.effective_sim();
    let options = solve_options(&run.controller);
    let mut rows = Vec::with_capacity(episodes);
    for episode in 0..episodes as u64 {
        let mut rng = episode_stream(run.seed, episode);
        let (task, setup) = sample_episode(&mut rng, run, &sim);
        let mut policy = ControllerPolicy::new(
            model,
            task,
            sim.clone(),
            options.clone(),
            run.controller.warm_start,
        )?;
        let trace = run_episode(
            &mut policy,
            &setup,
            &sim,
            run.experiment.bounces_per_episode,
        );
        let mean_error = episode_error(&trace);
        rows.push(EpisodeRow {
            episode,
            bounces: trace.bounces.len(),
            termination: trace.termination,
            mean_error,
            sim_time: trace.sim_time,
        });
    }
    let summary = summarize(&rows);
    Ok((rows, summary))
}

/// Evaluates at the episode count configured for the run.
pub fn evaluate(model: &dyn Dynamics, run: &RunConfig) -> Result<(Vec<EpisodeRow>, EvalSummary)> {
    evaluate_arm(model, run, run.experiment.eval_episodes)
}
