//! Primal-dual training loop.
//!
//! Each iteration draws a minibatch, descends the parameters along the
//! Lagrangian gradient with Adam, then ascends the multipliers along the
//! constraint estimates from the same minibatch and projects them to stay
//! non-negative.

use rand::Rng;

use crate::error::Error;
use crate::nn::{AdamState, MlpModel};
use crate::rng::{substream, Stream};

use super::{DualState, LearningProblem, Transition};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Dual ascent rate.
    pub alpha_lambda: f64,
    /// Initial value for every multiplier.
    pub lambda0: f64,
    pub seed: u64,
    /// Log every n-th iteration (the last one is always logged).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            iterations: 2_000,
            batch_size: 256,
            learning_rate: 1e-3,
            alpha_lambda: 0.01,
            lambda0: 0.0,
            seed: 0,
            log_every: 1,
        }
    }
}

/// One logged iteration: minibatch objective, constraint estimates, and the
/// multipliers after the dual step.
#[derive(Clone, Debug)]
pub struct LogRow {
    pub iteration: usize,
    pub objective: f64,
    pub constraints: Vec<f64>,
    pub lambdas: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

/// Trained model together with its final dual state and log.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub model: MlpModel,
    pub dual: DualState,
    pub log: TrainingLog,
    pub iterations_done: usize,
}

/// Abort carries the last model that passed the finiteness check, so callers
/// can still write a usable checkpoint.
#[derive(Debug)]
pub struct TrainAbort {
    pub iteration: usize,
    pub reason: String,
    pub last_good: Box<TrainRun>,
}

impl From<TrainAbort> for Error {
    fn from(a: TrainAbort) -> Error {
        Error::TrainAborted {
            iteration: a.iteration,
            reason: a.reason,
        }
    }
}

/// Deterministic split: shuffles indices from the split stream of `seed` and
/// moves `fraction` of the data (rounded down, at least one sample if the
/// fraction is positive and the dataset has two or more) into the validation
/// set.
pub fn split_validation(
    dataset: &[Transition],
    fraction: f64,
    seed: u64,
) -> (Vec<Transition>, Vec<Transition>) {
    assert!((0.0..1.0).contains(&fraction));
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = substream(seed, Stream::Split);
    // Fisher-Yates.
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let mut n_val = (dataset.len() as f64 * fraction).floor() as usize;
    if n_val == 0 && fraction > 0.0 && dataset.len() >= 2 {
        n_val = 1;
    }
    let val = indices[..n_val]
        .iter()
        .map(|&i| dataset[i].clone())
        .collect();
    let train = indices[n_val..]
        .iter()
        .map(|&i| dataset[i].clone())
        .collect();
    (train, val)
}

pub fn train(
    model0: &MlpModel,
    dataset: &[Transition],
    problem: &LearningProblem,
    config: &TrainConfig,
) -> std::result::Result<TrainRun, TrainAbort> {
    let fail_setup = |reason: String| TrainAbort {
        iteration: 0,
        reason,
        last_good: Box::new(TrainRun {
            model: model0.clone(),
            dual: DualState::new(problem.constraints.len(), config.lambda0, config.alpha_lambda),
            log: TrainingLog::default(),
            iterations_done: 0,
        }),
    };
    if dataset.is_empty() {
        return Err(fail_setup("empty dataset".into()));
    }
    if let Err(e) = problem.validate() {
        return Err(fail_setup(e.to_string()));
    }

    let mut model = model0.clone();
    let mut params = model.flatten_params();
    let mut adam = AdamState::new(params.len()).with_learning_rate(config.learning_rate);
    let mut dual = DualState::new(problem.constraints.len(), config.lambda0, config.alpha_lambda);
    let mut log = TrainingLog::default();
    let mut rng = substream(config.seed, Stream::Batches);
    let mut batch: Vec<Transition> = Vec::with_capacity(config.batch_size);

    for it in 0..config.iterations {
        batch.clear();
        for _ in 0..config.batch_size.max(1) {
            let k = rng.gen_range(0..dataset.len());
            batch.push(dataset[k].clone());
        }

        let abort = |reason: String, model: MlpModel, dual: DualState, log: TrainingLog| {
            TrainAbort {
                iteration: it,
                reason,
                last_good: Box::new(TrainRun {
                    model,
                    dual,
                    log,
                    iterations_done: it,
                }),
            }
        };

        let terms = match problem.batch_terms(&batch, &model, Some(&dual)) {
            Ok(t) => t,
            Err(e) => {
                return Err(abort(e.to_string(), model.clone(), dual.clone(), log));
            }
        };
        if let Err(e) = adam.step(&mut params, &terms.param_grads.flatten()) {
            return Err(abort(e.to_string(), model.clone(), dual.clone(), log));
        }
        // `model` still holds the pre-step parameters here, so it is the
        // last-good checkpoint if the step overflowed.
        if let Some(i) = params.iter().position(|v| !v.is_finite()) {
            let reason = format!("non-finite parameter {i} after optimizer step");
            return Err(abort(reason, model.clone(), dual.clone(), log));
        }
        model.set_from_flat(&params).expect("layout is fixed");

        dual.ascend(&terms.constraint_values);
        debug_assert!(dual.lambdas.iter().all(|l| *l >= 0.0));

        if it % config.log_every.max(1) == 0 || it + 1 == config.iterations {
            log.rows.push(LogRow {
                iteration: it,
                objective: terms.objective,
                constraints: terms.constraint_values.clone(),
                lambdas: dual.lambdas.clone(),
            });
        }
    }

    Ok(TrainRun {
        model,
        dual,
        log,
        iterations_done: config.iterations,
    })
}
