//! Experiment harness: dataset collection, the four training arms, episode
//! evaluation, and the analytic-error sweep.

mod collect;
mod evaluate;
mod sweep;
mod train;

pub use collect::{collect, dagger_collect, CollectStats};
pub use evaluate::{evaluate, evaluate_arm, summarize, EpisodeRow, EvalSummary};
pub use sweep::{roll_error_sweep, SweepArm, SweepRow};
pub use train::{
    deploy_trained, learning_problem, train_model, validation_triples, TrainedModel,
    ValidationTriple,
};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ControllerConfig, ModelMode, RunConfig};
use crate::control::{AnalyticDynamics, ControlTask, Dynamics, ResidualDynamics, SolveOptions};
use crate::error::Result;
use crate::nn::MlpModel;
use crate::sim::{Action, EpisodeSetup, PlannedAction, Policy, SimConfig, SimState};
use crate::vec3::Vec3;

/// Episode-stream blocks. Evaluation episodes use their index directly, so
/// the offsets keep collection and interleaved-collection draws disjoint
/// from them; the stride leaves room for per-phase streams inside one
/// collection episode.
pub const COLLECT_STREAM_BASE: u64 = 1 << 32;
pub const DAGGER_STREAM_BASE: u64 = 1 << 33;
pub const COLLECT_STREAM_STRIDE: u64 = 4;

/// Initial ball drop for every episode: slightly off-center, around a meter
/// up, with a small horizontal push.
pub fn sample_initial_state(rng: &mut ChaCha8Rng, config: &SimConfig) -> SimState {
    let ball_pos = Vec3::new(
        rng.gen_range(-0.25..0.25),
        rng.gen_range(-0.25..0.25),
        config.hit_plane_z + rng.gen_range(0.8..1.2),
    );
    let ball_vel = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), 0.0);
    SimState {
        ball_pos,
        ball_vel,
        paddle_pos: Vec3::new(0.0, 0.0, config.hit_plane_z),
        paddle_roll: 0.0,
        paddle_pitch: 0.0,
        paddle_vel: Vec3::ZERO,
    }
}

/// Evaluation task distribution: target uniform on the unit square, speed
/// band `[v_min, v_min + width]` with `v_min` uniform on [3, 4) and width
/// uniform on [1, 2]; box bounds and obstacles come from the controller
/// config.
pub fn sample_task(rng: &mut ChaCha8Rng, controller: &ControllerConfig) -> ControlTask {
    let p_desired = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let v_min = rng.gen_range(3.0..4.0);
    let width = rng.gen_range(1.0..2.0);
    ControlTask {
        p_desired,
        roll_bounds: [-controller.roll_bound, controller.roll_bound],
        pitch_bounds: [-controller.pitch_bound, controller.pitch_bound],
        speed_band: [v_min, v_min + width],
        obstacles: controller.obstacles.clone(),
    }
}

/// Task plus initial condition for one episode, in a fixed draw order.
pub fn sample_episode(
    rng: &mut ChaCha8Rng,
    run: &RunConfig,
    sim: &SimConfig,
) -> (ControlTask, EpisodeSetup) {
    let task = sample_task(rng, &run.controller);
    let initial = sample_initial_state(rng, sim);
    let setup = EpisodeSetup {
        initial,
        p_desired: task.p_desired,
    };
    (task, setup)
}

pub fn solve_options(controller: &ControllerConfig) -> SolveOptions {
    SolveOptions {
        initial_action: None,
        lambda0: 0.0,
        alpha_action: controller.alpha_action,
        alpha_decay: controller.alpha_decay,
        alpha_lambda: controller.alpha_lambda,
        max_step: controller.max_step,
        max_iterations: controller.max_iterations,
        tolerance: controller.tolerance,
        violation_limit: controller.violation_limit,
    }
}

/// A trained network packaged the way the controller consumes it.
#[derive(Clone, Debug)]
pub enum DeployedModel {
    Net(MlpModel),
    Corrected(ResidualDynamics),
}

pub fn deploy(net: MlpModel, mode: ModelMode, sim: &SimConfig) -> Result<DeployedModel> {
    match mode {
        ModelMode::Full => Ok(DeployedModel::Net(net)),
        ModelMode::Residual => Ok(DeployedModel::Corrected(ResidualDynamics::new(
            AnalyticDynamics::faulty(sim),
            net,
        )?)),
    }
}

impl Dynamics for DeployedModel {
    fn input_dim(&self) -> usize {
        match self {
            DeployedModel::Net(m) => Dynamics::input_dim(m),
            DeployedModel::Corrected(m) => m.input_dim(),
        }
    }

    fn output_dim(&self) -> usize {
        match self {
            DeployedModel::Net(m) => Dynamics::output_dim(m),
            DeployedModel::Corrected(m) => m.output_dim(),
        }
    }

    fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        match self {
            DeployedModel::Net(m) => m.predict(input),
            DeployedModel::Corrected(m) => m.predict(input),
        }
    }

    fn input_vjp(&self, input: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        match self {
            DeployedModel::Net(m) => m.input_vjp(input, upstream),
            DeployedModel::Corrected(m) => m.input_vjp(input, upstream),
        }
    }
}

/// Wraps a planner with seeded action jitter on a fraction of bounces, so
/// collected data is not confined to the planner's preferred actions.
pub struct ExplorationPolicy<P> {
    pub inner: P,
    pub rng: ChaCha8Rng,
    pub rate: f64,
    pub tilt_jitter: f64,
    pub vel_jitter: f64,
}

impl<P: Policy> Policy for ExplorationPolicy<P> {
    fn plan(&mut self, pre_impact: &SimState) -> Result<PlannedAction> {
        let planned = self.inner.plan(pre_impact)?;
        if self.rate <= 0.0 || self.rng.gen_range(0.0..1.0) >= self.rate {
            return Ok(planned);
        }
        let mut u = |lim: f64| {
            if lim > 0.0 {
                self.rng.gen_range(-lim..lim)
            } else {
                0.0
            }
        };
        let a = planned.action;
        let action = Action {
            roll: a.roll + u(self.tilt_jitter),
            pitch: a.pitch + u(self.tilt_jitter),
            paddle_vel: a.paddle_vel
                + Vec3::new(u(self.vel_jitter), u(self.vel_jitter), u(self.vel_jitter)),
        };
        Ok(PlannedAction {
            action,
            solve: planned.solve,
        })
    }
}

#[cfg(test)]
mod tests;
