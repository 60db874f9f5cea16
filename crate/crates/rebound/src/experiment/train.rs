//! Training arms: full or residual target, constrained or plain objective.

use crate::config::{ModelMode, ObjectiveKind, RunConfig};
use crate::error::{Error, Result};
use crate::learn::{
    duality_diagnostics, split_validation, train, DualityReport, LearningProblem, TrainConfig,
    TrainRun, Transition,
};
use crate::nn::MlpModel;
use crate::rng::{substream, Stream};
use crate::sim::{analytic_prediction, ImpactInputs, MODEL_INPUT_DIM, MODEL_OUTPUT_DIM};

use super::{dagger_collect, deploy, DeployedModel};

/// Everything a training arm produces: the network, its training trace, and
/// the held-out split it was validated on (already in label space for the
/// arm, so residual labels are the analytic gap).
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub run: TrainRun,
    pub problem: LearningProblem,
    pub validation: Vec<Transition>,
    pub mode: ModelMode,
    pub diagnostics: DualityReport,
}

impl TrainedModel {
    pub fn network(&self) -> &MlpModel {
        &self.run.model
    }
}

/// Re-centers labels for residual training: the network learns what the
/// flawed analytic model misses.
fn recenter(dataset: &[Transition], run: &RunConfig) -> Result<Vec<Transition>> {
    let sim = run.effective_sim();
    dataset
        .iter()
        .map(|t| {
            let inputs = ImpactInputs::from_model_input(&t.model_input())?;
            let base = analytic_prediction(&inputs, &sim);
            let label = vec![
                t.label[0] - base.x,
                t.label[1] - base.y,
                t.label[2] - base.z,
            ];
            Ok(Transition::new(t.state.clone(), t.action.clone(), label))
        })
        .collect()
}

pub fn learning_problem(run: &RunConfig) -> LearningProblem {
    match run.experiment.objective {
        ObjectiveKind::Unconstrained => LearningProblem::unconstrained(),
        ObjectiveKind::Constrained => {
            LearningProblem::normalized_with_floor(run.experiment.delta, run.experiment.eps)
        }
    }
}

fn layer_sizes(run: &RunConfig) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(run.learning.hidden_layers.len() + 2);
    sizes.push(MODEL_INPUT_DIM);
    sizes.extend_from_slice(&run.learning.hidden_layers);
    sizes.push(MODEL_OUTPUT_DIM);
    sizes
}

pub fn train_model(dataset: &[Transition], run: &RunConfig) -> Result<TrainedModel> {
    if dataset.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mode = run.experiment.mode;
    let labeled = match mode {
        ModelMode::Full => dataset.to_vec(),
        ModelMode::Residual => recenter(dataset, run)?,
    };
    let (train_set, validation) =
        split_validation(&labeled, run.learning.validation_fraction, run.seed);
    let problem = learning_problem(run);

    let mut init_rng = substream(run.seed, Stream::Init);
    let mut model = MlpModel::init(&layer_sizes(run), &mut init_rng);

    let rounds = run.experiment.dagger_rounds;
    let segments = rounds + 1;
    let per_segment = run.learning.iterations / segments;
    let remainder = run.learning.iterations - per_segment * segments;

    let mut pool = train_set;
    let mut last: Option<TrainRun> = None;
    for segment in 0..segments {
        let iterations = per_segment + if segment + 1 == segments { remainder } else { 0 };
        let config = TrainConfig {
            iterations,
            batch_size: run.learning.batch_size,
            learning_rate: run.learning.learning_rate,
            alpha_lambda: run.learning.alpha_lambda,
            lambda0: last
                .as_ref()
                .and_then(|r| r.dual.lambdas.first().copied())
                .unwrap_or(run.learning.lambda0),
            seed: run.seed.wrapping_add(segment as u64),
            log_every: run.learning.log_every,
        };
        let out = train(&model, &pool, &problem, &config).map_err(Error::from)?;
        model = out.model.clone();

        if segment + 1 < segments {
            let deployed = deploy(model.clone(), mode, &run.effective_sim())?;
            let (extra, _) = dagger_collect(
                &deployed,
                run,
                run.experiment.dagger_seconds,
                segment as u64,
            )?;
            let extra = match mode {
                ModelMode::Full => extra,
                ModelMode::Residual => recenter(&extra, run)?,
            };
            pool.extend(extra);
        }
        last = Some(merge_runs(last, out));
    }
    let run_out = last.expect("at least one segment");
    // An empty validation split still deserves a report; fall back to the
    // training pool.
    let report_set: &[Transition] = if validation.is_empty() { &pool } else { &validation };
    let diagnostics = duality_diagnostics(&run_out.model, &run_out.dual, report_set, &problem)?;
    Ok(TrainedModel {
        run: run_out,
        problem,
        validation,
        mode,
        diagnostics,
    })
}

/// Stitches segment logs into one run, offsetting iteration numbers.
fn merge_runs(earlier: Option<TrainRun>, mut later: TrainRun) -> TrainRun {
    let Some(mut base) = earlier else {
        return later;
    };
    let offset = base.iterations_done;
    for row in &mut later.log.rows {
        row.iteration += offset;
    }
    base.log.rows.append(&mut later.log.rows);
    base.model = later.model;
    base.dual = later.dual;
    base.iterations_done += later.iterations_done;
    base
}

/// Deploys a trained arm for control.
pub fn deploy_trained(trained: &TrainedModel, run: &RunConfig) -> Result<DeployedModel> {
    deploy(trained.network().clone(), trained.mode, &run.effective_sim())
}

/// Per-sample validation errors, for error-distribution studies: label norm,
/// absolute error, and (where defined) normalized error of the deployed
/// prediction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationTriple {
    pub label_norm: f64,
    pub absolute_error: f64,
    pub normalized_error: Option<f64>,
}

pub fn validation_triples(
    network: &MlpModel,
    validation: &[Transition],
    floor: f64,
) -> Result<Vec<ValidationTriple>> {
    validation
        .iter()
        .map(|t| {
            let pred = network.forward(&t.model_input())?;
            let absolute_error = crate::learn::absolute_error(&pred, t);
            let norm = t.label_norm();
            Ok(ValidationTriple {
                label_norm: norm,
                absolute_error,
                normalized_error: if norm >= floor && norm > 0.0 {
                    Some(absolute_error / norm)
                } else {
                    None
                },
            })
        })
        .collect()
}
