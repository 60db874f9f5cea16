use super::*;
use crate::gradcheck::{self, DEFAULT_ABS_FLOOR, DEFAULT_REL_TOL, DEFAULT_STEP};
use crate::nn::MlpModel;
use crate::rng::{substream, Stream};
use proptest::prelude::*;

fn tr(state: &[f64], action: &[f64], label: &[f64]) -> Transition {
    Transition::new(state.to_vec(), action.to_vec(), label.to_vec())
}

#[test]
fn model_input_concatenates_state_and_action() {
    let t = tr(&[1.0, 2.0], &[3.0], &[0.0]);
    assert_eq!(t.model_input(), vec![1.0, 2.0, 3.0]);
}

#[test]
fn region_boundary_belongs_to_norm_at_least() {
    let delta = 0.1;
    let at = Region::NormAtLeast { delta };
    let below = Region::NormBelow { delta };
    let boundary = tr(&[0.0], &[0.0], &[0.1, 0.0]);
    assert!(at.contains(&boundary));
    assert!(!below.contains(&boundary));
    assert_eq!(at.complement(), below);
}

#[test]
fn losses_match_hand_values() {
    let t = tr(&[0.0], &[0.0], &[0.0, 1.0, 0.0]);
    let pred = [1.0, 1.0, 0.0];
    assert!((absolute_error(&pred, &t) - 1.0).abs() < 1e-15);
    assert!((normalized_loss(&pred, &t, 0.1).unwrap() - 1.0).abs() < 1e-15);

    let t2 = tr(&[0.0], &[0.0], &[0.0, 2.0]);
    let pred2 = [1.0, 2.0];
    assert!((normalized_loss(&pred2, &t2, 0.1).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn normalized_loss_rejects_labels_below_floor() {
    let t = tr(&[0.0], &[0.0], &[0.05, 0.0]);
    assert!(matches!(
        normalized_loss(&[0.0, 0.0], &t, 0.1),
        Err(crate::error::Error::LabelBelowFloor { .. })
    ));
    // Zero labels are rejected even with a zero floor.
    let z = tr(&[0.0], &[0.0], &[0.0]);
    assert!(normalized_loss(&[1.0], &z, 0.0).is_err());
}

#[test]
fn loss_gradients_match_finite_differences() {
    let t = tr(&[0.0], &[0.0], &[0.3, -0.8, 0.2]);
    let pred = vec![0.5, 0.1, -0.4];

    let g_abs = absolute_error_gradient(&pred, &t);
    let mut f_abs = |p: &[f64]| absolute_error(p, &t);
    let n_abs = gradcheck::numeric_gradient(&mut f_abs, &pred, DEFAULT_STEP);
    assert!(gradcheck::max_rel_error(&g_abs, &n_abs, DEFAULT_ABS_FLOOR) < DEFAULT_REL_TOL);

    let g_norm = normalized_loss_gradient(&pred, &t, 0.1).unwrap();
    let mut f_norm = |p: &[f64]| normalized_loss(p, &t, 0.1).unwrap();
    let n_norm = gradcheck::numeric_gradient(&mut f_norm, &pred, DEFAULT_STEP);
    assert!(gradcheck::max_rel_error(&g_norm, &n_norm, DEFAULT_ABS_FLOOR) < DEFAULT_REL_TOL);
}

#[test]
fn absolute_error_gradient_is_zero_at_the_kink() {
    let t = tr(&[0.0], &[0.0], &[1.0, 2.0]);
    assert_eq!(absolute_error_gradient(&[1.0, 2.0], &t), vec![0.0, 0.0]);
}

fn two_region_batch() -> Vec<Transition> {
    vec![
        tr(&[0.5], &[0.0], &[1.0, 0.0]),
        tr(&[-0.2], &[0.1], &[0.0, 0.5]),
        tr(&[0.1], &[-0.3], &[0.05, 0.0]),
        tr(&[0.0], &[0.2], &[0.0, 0.02]),
    ]
}

#[test]
fn estimates_match_hand_computation() {
    // Zero network predicts (0, 0); labels split two per region at delta 0.1.
    let model = MlpModel::zeros(&[2, 2]);
    let problem = LearningProblem::normalized_with_floor(0.1, 0.05);
    let batch = two_region_batch();

    // Objective: normalized errors are 1 for both large-label samples,
    // averaged over the whole batch: 2/4.
    let obj = problem.objective_estimate(&batch, &model).unwrap();
    assert!((obj - 0.5).abs() < 1e-12);

    // Constraint: mean of ||pred - f|| over the small-label samples
    // = (0.05 + 0.02) / 4 - 0.05.
    let g = problem
        .constraint_estimate(&batch, &model, &problem.constraints[0])
        .unwrap();
    assert!((g - (0.07 / 4.0 - 0.05)).abs() < 1e-12);

    // Lagrangian adds lambda * g.
    let dual = DualState {
        lambdas: vec![2.0],
        ascent_rate: 0.01,
    };
    let l = problem.lagrangian(&batch, &model, &dual).unwrap();
    assert!((l - (obj + 2.0 * g)).abs() < 1e-12);
}

#[test]
fn constraint_estimate_on_empty_region_is_minus_bound() {
    let model = MlpModel::zeros(&[2, 2]);
    let problem = LearningProblem::normalized_with_floor(0.1, 0.05);
    // All labels above delta: the constraint region is empty in this batch.
    let batch = vec![tr(&[0.1], &[0.0], &[1.0, 0.0]), tr(&[0.2], &[0.0], &[0.0, 2.0])];
    let g = problem
        .constraint_estimate(&batch, &model, &problem.constraints[0])
        .unwrap();
    assert!((g - (-0.05)).abs() < 1e-15);
}

#[test]
fn empty_batch_is_rejected() {
    let model = MlpModel::zeros(&[2, 2]);
    let problem = LearningProblem::unconstrained();
    assert!(matches!(
        problem.objective_estimate(&[], &model),
        Err(crate::error::Error::EmptyBatch)
    ));
}

#[test]
fn dual_ascent_projects_to_zero() {
    let mut dual = DualState::new(1, 0.02, 1.0);
    // 0.02 + 1.0 * (-0.05) = -0.03, projected to 0.
    dual.ascend(&[-0.05]);
    assert_eq!(dual.lambdas, vec![0.0]);
    // Positive constraint values grow the multiplier.
    dual.ascend(&[0.5]);
    assert_eq!(dual.lambdas, vec![0.5]);
}

#[test]
fn lagrangian_grads_match_finite_differences() {
    let mut rng = substream(41, Stream::Init);
    let model = MlpModel::init(&[2, 5, 2], &mut rng);
    let problem = LearningProblem::normalized_with_floor(0.1, 0.05);
    let dual = DualState {
        lambdas: vec![0.7],
        ascent_rate: 0.01,
    };
    let batch = two_region_batch();

    let (grads, lambda_grads) = problem.lagrangian_grads(&batch, &model, &dual).unwrap();

    // Dual gradient is the constraint estimate.
    let g0 = problem
        .constraint_estimate(&batch, &model, &problem.constraints[0])
        .unwrap();
    assert!((lambda_grads[0] - g0).abs() < 1e-12);

    // Parameter gradient against central differences of the scalar
    // Lagrangian.
    let flat0 = model.flatten_params();
    let mut f = |p: &[f64]| {
        let mut m = model.clone();
        m.set_from_flat(p).unwrap();
        problem.lagrangian(&batch, &m, &dual).unwrap()
    };
    let numeric = gradcheck::numeric_gradient(&mut f, &flat0, DEFAULT_STEP);
    let err = gradcheck::max_rel_error(&grads.flatten(), &numeric, DEFAULT_ABS_FLOOR);
    assert!(err < DEFAULT_REL_TOL, "gradient error {err}");
}

fn synthetic_dataset(n: usize) -> Vec<Transition> {
    // Scalar map: label = 0.5 * x, so labels below 0.1 in norm come from
    // |x| < 0.2.
    (0..n)
        .map(|i| {
            let x = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            tr(&[x], &[], &[0.5 * x])
        })
        .collect()
}

#[test]
fn training_descends_and_keeps_multipliers_nonnegative() {
    let mut rng = substream(7, Stream::Init);
    let model0 = MlpModel::init(&[1, 8, 1], &mut rng);
    let dataset = synthetic_dataset(100);
    let problem = LearningProblem::normalized_with_floor(0.1, 0.02);
    let config = TrainConfig {
        iterations: 400,
        batch_size: 32,
        seed: 7,
        ..TrainConfig::default()
    };
    let run = train(&model0, &dataset, &problem, &config).unwrap();
    assert_eq!(run.iterations_done, 400);

    for row in &run.log.rows {
        assert!(row.lambdas.iter().all(|l| *l >= 0.0));
        assert!(row.objective.is_finite());
    }
    let first = run.log.rows.first().unwrap().objective;
    let last_avg: f64 = run.log.rows.iter().rev().take(20).map(|r| r.objective).sum::<f64>() / 20.0;
    assert!(
        last_avg < 0.5 * first,
        "objective did not descend: {first} -> {last_avg}"
    );

    // Full-dataset constraint after training should be near or below bound.
    let g = problem
        .constraint_estimate(&dataset, &run.model, &problem.constraints[0])
        .unwrap();
    assert!(g < 0.05, "constraint value {g}");
}

#[test]
fn training_aborts_on_bad_data_with_last_good_model() {
    let mut rng = substream(3, Stream::Init);
    let model0 = MlpModel::init(&[1, 4, 1], &mut rng);
    let dataset = vec![tr(&[f64::NAN], &[], &[0.5])];
    let problem = LearningProblem::unconstrained();
    let config = TrainConfig {
        iterations: 10,
        batch_size: 4,
        seed: 1,
        ..TrainConfig::default()
    };
    let abort = train(&model0, &dataset, &problem, &config).unwrap_err();
    assert_eq!(abort.iteration, 0);
    assert_eq!(abort.last_good.model, model0);
    let err: crate::error::Error = abort.into();
    assert!(err.to_string().contains("iteration 0"));
}

#[test]
fn split_validation_is_deterministic_and_disjoint() {
    let dataset = synthetic_dataset(50);
    let (tr1, va1) = split_validation(&dataset, 0.1, 99);
    let (tr2, va2) = split_validation(&dataset, 0.1, 99);
    assert_eq!(tr1, tr2);
    assert_eq!(va1, va2);
    assert_eq!(va1.len(), 5);
    assert_eq!(tr1.len() + va1.len(), dataset.len());
    let (_, va3) = split_validation(&dataset, 0.1, 100);
    assert_ne!(va1, va3);

    // Every sample lands in exactly one side.
    let mut all: Vec<_> = tr1.iter().chain(va1.iter()).map(|t| t.state[0]).collect();
    all.sort_by(f64::total_cmp);
    let mut want: Vec<_> = dataset.iter().map(|t| t.state[0]).collect();
    want.sort_by(f64::total_cmp);
    assert_eq!(all, want);
}

#[test]
fn diagnostics_report_slack_and_complementarity() {
    let model = MlpModel::zeros(&[2, 2]);
    let problem = LearningProblem::normalized_with_floor(0.1, 0.05);
    let dual = DualState {
        lambdas: vec![0.5],
        ascent_rate: 0.01,
    };
    let batch = two_region_batch();
    let report = duality_diagnostics(&model, &dual, &batch, &problem).unwrap();
    let g = problem
        .constraint_estimate(&batch, &model, &problem.constraints[0])
        .unwrap();
    assert!((report.constraint_values[0] - g).abs() < 1e-15);
    assert!((report.slacks[0] + g).abs() < 1e-15);
    assert!((report.complementarity[0] - 0.5 * g).abs() < 1e-15);
    assert!(report.lambdas_nonnegative);
}

proptest! {
    #[test]
    fn regions_partition_label_space(label in prop::collection::vec(-3.0f64..3.0, 3)) {
        let t = tr(&[0.0], &[0.0], &label);
        let at = Region::NormAtLeast { delta: 0.1 };
        let below = Region::NormBelow { delta: 0.1 };
        prop_assert!(at.contains(&t) != below.contains(&t));
    }

    #[test]
    fn normalized_loss_is_scale_invariant(
        pred in prop::collection::vec(-2.0f64..2.0, 2),
        label in prop::collection::vec(0.5f64..2.0, 2),
        c in 0.5f64..4.0,
    ) {
        let t = tr(&[0.0], &[0.0], &label);
        let base = normalized_loss(&pred, &t, 0.1).unwrap();
        let scaled_pred: Vec<f64> = pred.iter().map(|p| c * p).collect();
        let scaled_label: Vec<f64> = label.iter().map(|f| c * f).collect();
        let ts = tr(&[0.0], &[0.0], &scaled_label);
        let scaled = normalized_loss(&scaled_pred, &ts, 0.1).unwrap();
        prop_assert!((base - scaled).abs() < 1e-9);
    }

    #[test]
    fn dual_state_never_goes_negative(
        grads in prop::collection::vec(-1.0f64..1.0, 1..4),
        rate in 0.001f64..1.0,
    ) {
        let mut dual = DualState::new(grads.len(), 0.0, rate);
        for _ in 0..5 {
            dual.ascend(&grads);
            prop_assert!(dual.lambdas.iter().all(|l| *l >= 0.0));
        }
    }
}
