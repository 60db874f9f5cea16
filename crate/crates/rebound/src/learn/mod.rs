//! Expectation-constrained model learning.
//!
//! The training signal is a Lagrangian over a distribution of transitions:
//! an objective loss averaged over one region of state space, plus dual
//! variables times constraint functions averaged over other regions. Primal
//! steps descend the model parameters, dual steps ascend the multipliers and
//! project them back onto the non-negative orthant. A constraint here is
//! "the average error on region i must stay at or below a bound", so a
//! positive multiplier tells the trainer how much that region currently
//! costs.

mod diagnostics;
mod lagrangian;
mod trainer;

pub use diagnostics::{duality_diagnostics, DualityReport};
pub use lagrangian::{
    absolute_error, absolute_error_gradient, indicator, normalized_loss, normalized_loss_gradient,
};
pub use trainer::{split_validation, train, LogRow, TrainAbort, TrainConfig, TrainRun, TrainingLog};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One supervised transition: state, applied action, observed next-step
/// label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    #[serde(rename = "s")]
    pub state: Vec<f64>,
    #[serde(rename = "a")]
    pub action: Vec<f64>,
    #[serde(rename = "f")]
    pub label: Vec<f64>,
}

impl Transition {
    pub fn new(state: Vec<f64>, action: Vec<f64>, label: Vec<f64>) -> Transition {
        Transition {
            state,
            action,
            label,
        }
    }

    /// Network input: state concatenated with action.
    pub fn model_input(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.state.len() + self.action.len());
        v.extend_from_slice(&self.state);
        v.extend_from_slice(&self.action);
        v
    }

    pub fn label_norm(&self) -> f64 {
        self.label.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.state.iter().all(|v| v.is_finite())
            && self.action.iter().all(|v| v.is_finite())
            && self.label.iter().all(|v| v.is_finite())
    }
}

/// Region of transition space, decided from the label norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// `||f|| >= delta`. The boundary belongs to this region.
    NormAtLeast { delta: f64 },
    /// `||f|| < delta`; complement of `NormAtLeast` at the same `delta`.
    NormBelow { delta: f64 },
    Everywhere,
}

impl Region {
    pub fn contains(&self, t: &Transition) -> bool {
        match self {
            Region::NormAtLeast { delta } => t.label_norm() >= *delta,
            Region::NormBelow { delta } => t.label_norm() < *delta,
            Region::Everywhere => true,
        }
    }

    pub fn complement(&self) -> Region {
        match self {
            Region::NormAtLeast { delta } => Region::NormBelow { delta: *delta },
            Region::NormBelow { delta } => Region::NormAtLeast { delta: *delta },
            Region::Everywhere => Region::NormBelow { delta: 0.0 },
        }
    }
}

/// Per-sample loss applied to a model prediction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleLoss {
    /// `||pred - f||`
    AbsoluteError,
    /// `||pred - f|| / ||f||`; only defined where the label norm is at or
    /// above the problem's floor.
    NormalizedError,
}

/// One inequality constraint: the mean of `loss` over `region` must not
/// exceed `bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub region: Region,
    pub loss: SampleLoss,
    pub bound: f64,
}

/// Full problem statement handed to [`train`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningProblem {
    pub objective_region: Region,
    pub objective_loss: SampleLoss,
    pub constraints: Vec<ConstraintSpec>,
    /// Label-norm floor under which normalized losses are undefined. The
    /// objective region must exclude that set when a normalized loss is used.
    pub label_floor: f64,
}

impl LearningProblem {
    /// Plain regression: mean absolute error everywhere, no constraints.
    pub fn unconstrained() -> LearningProblem {
        LearningProblem {
            objective_region: Region::Everywhere,
            objective_loss: SampleLoss::AbsoluteError,
            constraints: Vec::new(),
            label_floor: 0.0,
        }
    }

    /// Normalized error on labels at or above `delta`, with the mean absolute
    /// error on the rest constrained to at most `eps`.
    pub fn normalized_with_floor(delta: f64, eps: f64) -> LearningProblem {
        LearningProblem {
            objective_region: Region::NormAtLeast { delta },
            objective_loss: SampleLoss::NormalizedError,
            constraints: vec![ConstraintSpec {
                region: Region::NormBelow { delta },
                loss: SampleLoss::AbsoluteError,
                bound: eps,
            }],
            label_floor: delta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective_loss == SampleLoss::NormalizedError && self.label_floor <= 0.0 {
            return Err(Error::Config(
                "normalized objective needs a positive label_floor".into(),
            ));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.bound < 0.0 {
                return Err(Error::Config(format!("constraint {i} has a negative bound")));
            }
            if c.loss == SampleLoss::NormalizedError && self.label_floor <= 0.0 {
                return Err(Error::Config(format!(
                    "constraint {i} uses a normalized loss without a positive label_floor"
                )));
            }
        }
        Ok(())
    }
}

/// Dual variables with their ascent rate. Invariant: every multiplier stays
/// non-negative, enforced by projection inside [`DualState::ascend`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambdas: Vec<f64>,
    pub ascent_rate: f64,
}

impl DualState {
    pub fn new(count: usize, lambda0: f64, ascent_rate: f64) -> DualState {
        DualState {
            lambdas: vec![lambda0.max(0.0); count],
            ascent_rate,
        }
    }

    /// `lambda <- max(0, lambda + rate * grad)`, one plain ascent step
    /// followed by projection onto the non-negative orthant.
    pub fn ascend(&mut self, lambda_grad: &[f64]) {
        assert_eq!(lambda_grad.len(), self.lambdas.len());
        for (l, g) in self.lambdas.iter_mut().zip(lambda_grad) {
            *l = (*l + self.ascent_rate * g).max(0.0);
        }
    }
}

#[cfg(test)]
mod tests;
