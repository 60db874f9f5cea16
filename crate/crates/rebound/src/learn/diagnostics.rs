//! Post-training checks on held-out data.

use crate::error::Result;
use crate::nn::MlpModel;

use super::{DualState, LearningProblem, Transition};

/// Validation-set duality summary. `slacks[i]` is `bound_i - mean(h_i)`, so a
/// satisfied constraint has non-negative slack; `complementarity[i]` is
/// `lambda_i * constraint_value_i`, which approaches zero at a saddle point.
#[derive(Clone, Debug)]
pub struct DualityReport {
    pub objective: f64,
    pub constraint_values: Vec<f64>,
    pub slacks: Vec<f64>,
    pub complementarity: Vec<f64>,
    pub lambdas_nonnegative: bool,
}

pub fn duality_diagnostics(
    model: &MlpModel,
    dual: &DualState,
    validation: &[Transition],
    problem: &LearningProblem,
) -> Result<DualityReport> {
    let terms = problem.batch_terms(validation, model, None)?;
    let slacks = terms.constraint_values.iter().map(|v| -v).collect();
    let complementarity = dual
        .lambdas
        .iter()
        .zip(&terms.constraint_values)
        .map(|(l, g)| l * g)
        .collect();
    Ok(DualityReport {
        objective: terms.objective,
        constraint_values: terms.constraint_values,
        slacks,
        complementarity,
        lambdas_nonnegative: dual.lambdas.iter().all(|l| *l >= 0.0),
    })
}
