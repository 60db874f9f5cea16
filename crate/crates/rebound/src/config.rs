//! Run configuration: one schema-strict document fully specifies a run.
//!
//! Unknown fields are rejected everywhere so a typo cannot silently fall
//! back to a default, and [`RunConfig::validate`] checks every module-level
//! invariant before any compute starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::RectObstacle;
use crate::error::{Error, Result};
use crate::sim::SimConfig;

/// Which map the network learns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    /// The full contact map.
    Full,
    /// A correction on top of the flawed analytic model; deployment adds the
    /// two.
    Residual,
}

/// Which training objective is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Mean absolute error everywhere, no constraints.
    Unconstrained,
    /// Normalized error on labels at or above `delta`, mean absolute error
    /// on the rest constrained to `eps`.
    Constrained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub hidden_layers: Vec<usize>,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Dual ascent rate.
    pub alpha_lambda: f64,
    /// Initial multiplier value.
    pub lambda0: f64,
    pub validation_fraction: f64,
    /// Thin the training log to every n-th iteration.
    pub log_every: usize,
}

impl Default for LearningConfig {
    fn default() -> LearningConfig {
        LearningConfig {
            hidden_layers: vec![128, 128],
            iterations: 2_000,
            batch_size: 256,
            learning_rate: 1e-3,
            alpha_lambda: 0.01,
            lambda0: 0.0,
            validation_fraction: 0.1,
            log_every: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub alpha_action: f64,
    pub alpha_decay: f64,
    pub alpha_lambda: f64,
    /// Per-iteration cap on the action movement; see
    /// [`crate::control::SolveOptions::max_step`].
    pub max_step: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Solves ending above this violation are rejected (and count as episode
    /// failures).
    pub violation_limit: f64,
    pub warm_start: bool,
    /// Evaluation tasks bound |roll| and |pitch| by these.
    pub roll_bound: f64,
    pub pitch_bound: f64,
    pub obstacles: Vec<RectObstacle>,
}

impl Default for ControllerConfig {
    fn default() -> ControllerConfig {
        ControllerConfig {
            alpha_action: 0.05,
            alpha_decay: 0.99,
            alpha_lambda: 0.1,
            max_step: 0.1,
            max_iterations: 500,
            tolerance: 1e-5,
            violation_limit: 1e-3,
            warm_start: true,
            roll_bound: 0.4,
            pitch_bound: 0.4,
            obstacles: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: ModelMode,
    pub objective: ObjectiveKind,
    /// Label-norm floor separating the objective region from the constraint
    /// region.
    pub delta: f64,
    /// Bound on the mean absolute error over small labels.
    pub eps: f64,
    /// Simulated seconds of data collection.
    pub collection_seconds: f64,
    pub eval_episodes: usize,
    pub bounces_per_episode: usize,
    /// Planned bounces per collection episode. Shorter than evaluation
    /// episodes so the time budget buys more episodes, hence more decay
    /// tails and task variety.
    pub collect_bounces: usize,
    /// Roll offset of the flawed analytic model. Harness runs copy this into
    /// the simulator's `observation_roll_error`, so this value is the single
    /// knob.
    pub analytic_roll_error: f64,
    /// Fraction of collection bounces that get action jitter on top of the
    /// planned action.
    pub exploration_rate: f64,
    pub exploration_tilt: f64,
    pub exploration_vel: f64,
    /// After each collection episode, let the ball bounce to rest on a
    /// near-flat paddle so the dataset covers the low-speed regime.
    pub decay_tails: bool,
    pub decay_tail_bounces: usize,
    /// Optional interleaved collection rounds under the partially trained
    /// model (0 disables).
    pub dagger_rounds: usize,
    pub dagger_seconds: f64,
    pub sweep_roll_errors: Vec<f64>,
    pub sweep_episodes: usize,
    /// Checkpoint deployed by the demo subcommand; the flawed analytic model
    /// when absent.
    pub demo_checkpoint: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            mode: ModelMode::Full,
            objective: ObjectiveKind::Constrained,
            delta: 0.1,
            eps: 0.1,
            collection_seconds: 252.0,
            eval_episodes: 100,
            bounces_per_episode: 20,
            collect_bounces: 10,
            analytic_roll_error: 0.1,
            exploration_rate: 0.25,
            exploration_tilt: 0.06,
            exploration_vel: 0.25,
            decay_tails: true,
            decay_tail_bounces: 30,
            dagger_rounds: 0,
            dagger_seconds: 30.0,
            sweep_roll_errors: vec![0.05, 0.1, 0.15, 0.2],
            sweep_episodes: 50,
            demo_checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub sim: SimConfig,
    pub learning: LearningConfig,
    pub controller: ControllerConfig,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            sim: SimConfig::default(),
            learning: LearningConfig::default(),
            controller: ControllerConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    /// The simulator settings harness runs actually use: the experiment's
    /// analytic roll error wins over the sim-level field.
    pub fn effective_sim(&self) -> SimConfig {
        SimConfig {
            observation_roll_error: self.experiment.analytic_roll_error,
            ..self.sim.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;

        let l = &self.learning;
        if l.hidden_layers.is_empty() || l.hidden_layers.iter().any(|&n| n == 0) {
            return Err(Error::Config(format!(
                "learning.hidden_layers must be nonempty and positive, got {:?}",
                l.hidden_layers
            )));
        }
        if l.batch_size == 0 {
            return Err(Error::Config("learning.batch_size must be at least 1".into()));
        }
        if !(l.learning_rate > 0.0 && l.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning.learning_rate must be positive, got {}",
                l.learning_rate
            )));
        }
        if !(l.alpha_lambda >= 0.0 && l.alpha_lambda.is_finite()) {
            return Err(Error::Config(format!(
                "learning.alpha_lambda must be non-negative, got {}",
                l.alpha_lambda
            )));
        }
        if l.lambda0 < 0.0 {
            return Err(Error::Config(format!(
                "learning.lambda0 must be non-negative, got {}",
                l.lambda0
            )));
        }
        if !(0.0..0.5).contains(&l.validation_fraction) {
            return Err(Error::Config(format!(
                "learning.validation_fraction must be in [0, 0.5), got {}",
                l.validation_fraction
            )));
        }

        let c = &self.controller;
        for (name, v) in [
            ("controller.alpha_action", c.alpha_action),
            ("controller.alpha_lambda", c.alpha_lambda),
            ("controller.tolerance", c.tolerance),
            ("controller.violation_limit", c.violation_limit),
            ("controller.roll_bound", c.roll_bound),
            ("controller.pitch_bound", c.pitch_bound),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(c.alpha_decay > 0.0 && c.alpha_decay <= 1.0) {
            return Err(Error::Config(format!(
                "controller.alpha_decay must be in (0, 1], got {}",
                c.alpha_decay
            )));
        }
        if !(c.max_step >= 0.0 && c.max_step.is_finite()) {
            return Err(Error::Config(format!(
                "controller.max_step must be non-negative (0 disables the cap), got {}",
                c.max_step
            )));
        }
        if c.roll_bound > std::f64::consts::FRAC_PI_2 || c.pitch_bound > std::f64::consts::FRAC_PI_2
        {
            return Err(Error::Config(
                "controller roll/pitch bounds must stay within a quarter turn".into(),
            ));
        }
        for o in &c.obstacles {
            o.validate()?;
        }

        let e = &self.experiment;
        if !(e.delta > 0.0 && e.delta.is_finite()) {
            return Err(Error::Config(format!(
                "experiment.delta must be positive, got {}",
                e.delta
            )));
        }
        if !(e.eps >= 0.0 && e.eps.is_finite()) {
            return Err(Error::Config(format!(
                "experiment.eps must be non-negative, got {}",
                e.eps
            )));
        }
        if e.eval_episodes == 0 {
            return Err(Error::Config("experiment.eval_episodes must be at least 1".into()));
        }
        if e.bounces_per_episode == 0 {
            return Err(Error::Config(
                "experiment.bounces_per_episode must be at least 1".into(),
            ));
        }
        if e.collect_bounces == 0 {
            return Err(Error::Config(
                "experiment.collect_bounces must be at least 1".into(),
            ));
        }
        if e.collection_seconds < 0.0 {
            return Err(Error::Config(format!(
                "experiment.collection_seconds must be non-negative, got {}",
                e.collection_seconds
            )));
        }
        if !(0.0..=1.0).contains(&e.exploration_rate) {
            return Err(Error::Config(format!(
                "experiment.exploration_rate must be in [0, 1], got {}",
                e.exploration_rate
            )));
        }
        if !e.analytic_roll_error.is_finite() {
            return Err(Error::Config("experiment.analytic_roll_error must be finite".into()));
        }
        if e.sweep_roll_errors.is_empty() {
            return Err(Error::Config("experiment.sweep_roll_errors must be nonempty".into()));
        }
        if e.sweep_episodes == 0 {
            return Err(Error::Config("experiment.sweep_episodes must be at least 1".into()));
        }
        Ok(())
    }
}
