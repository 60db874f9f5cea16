//! Dataset collection by running the planner in the simulator.
//!
//! Transitions are recorded at every contact with the ground-truth outcome
//! as the label, whatever model did the planning. Each planned episode is
//! followed by a passive decay tail (near-flat paddle, tiny jitter) so the
//! dataset also covers rebounds that barely move, which the planned episodes
//! alone would never produce.

use crate::config::RunConfig;
use crate::control::{AnalyticDynamics, ControllerPolicy, Dynamics};
use crate::error::Result;
use crate::learn::Transition;
use crate::rng::episode_stream;
use crate::sim::{run_episode, DecayPolicy, EpisodeSetup, EpisodeTrace, SimConfig};

use super::{
    sample_episode, solve_options, ExplorationPolicy, COLLECT_STREAM_BASE, COLLECT_STREAM_STRIDE,
    DAGGER_STREAM_BASE,
};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CollectStats {
    pub episodes: usize,
    pub transitions: usize,
    pub sim_seconds: f64,
}

fn harvest(trace: &EpisodeTrace, into: &mut Vec<Transition>) {
    for bounce in &trace.bounces {
        into.push(bounce.sample.to_transition());
    }
}

fn collect_with(
    model: &dyn Dynamics,
    run: &RunConfig,
    sim: &SimConfig,
    seconds: f64,
    stream_base: u64,
) -> Result<(Vec<Transition>, CollectStats)> {
    let mut dataset = Vec::new();
    let mut stats = CollectStats::default();
    let mut episode: u64 = 0;

    while stats.sim_seconds < seconds {
        let base = stream_base + episode * COLLECT_STREAM_STRIDE;
        let mut task_rng = episode_stream(run.seed, base);
        let (task, setup) = sample_episode(&mut task_rng, run, sim);

        let planner = ControllerPolicy::new(
            model,
            task,
            sim.clone(),
            solve_options(&run.controller),
            run.controller.warm_start,
        )?;
        let mut policy = ExplorationPolicy {
            inner: planner,
            rng: episode_stream(run.seed, base + 1),
            rate: run.experiment.exploration_rate,
            tilt_jitter: run.experiment.exploration_tilt,
            vel_jitter: run.experiment.exploration_vel,
        };
        let trace = run_episode(&mut policy, &setup, sim, run.experiment.collect_bounces);
        harvest(&trace, &mut dataset);
        stats.sim_seconds += trace.sim_time;

        if run.experiment.decay_tails {
            let mut decay = DecayPolicy {
                rng: episode_stream(run.seed, base + 2),
                tilt_jitter: 0.03,
                vel_jitter: 0.05,
            };
            let tail_setup = EpisodeSetup {
                initial: trace.final_state,
                p_desired: [0.0, 0.0],
            };
            let tail = run_episode(
                &mut decay,
                &tail_setup,
                sim,
                run.experiment.decay_tail_bounces,
            );
            harvest(&tail, &mut dataset);
            stats.sim_seconds += tail.sim_time;
        }

        stats.episodes += 1;
        episode += 1;
    }

    stats.transitions = dataset.len();
    Ok((dataset, stats))
}

/// Primary collection pass: the planner runs through the flawed analytic
/// model while labels come from the true contact map.
pub fn collect(run: &RunConfig) -> Result<(Vec<Transition>, CollectStats)> {
    let sim = run.effective_sim();
    let faulty = AnalyticDynamics::faulty(&sim);
    collect_with(
        &faulty,
        run,
        &sim,
        run.experiment.collection_seconds,
        COLLECT_STREAM_BASE,
    )
}

/// Interleaved collection under a partially trained model. `round` selects a
/// disjoint stream block so successive rounds never reuse draws.
pub fn dagger_collect(
    model: &dyn Dynamics,
    run: &RunConfig,
    seconds: f64,
    round: u64,
) -> Result<(Vec<Transition>, CollectStats)> {
    let sim = run.effective_sim();
    collect_with(
        model,
        run,
        &sim,
        seconds,
        DAGGER_STREAM_BASE + (round << 20),
    )
}
