//! Batch estimates of the Lagrangian and its gradients.
//!
//! Everything here is a sample mean over a batch: the objective is
//! `mean(loss * indicator)`, each constraint value is
//! `mean(loss_i * indicator_i) - bound_i`, and the parameter gradient is the
//! matching mean of per-sample gradients pulled back through the network.
//! One forward and at most one backward pass per sample computes all of it.

use crate::error::{Error, Result};
use crate::nn::{MlpGradients, MlpModel};

use super::{ConstraintSpec, DualState, LearningProblem, Region, SampleLoss, Transition};

/// 1 if the transition lies in the region, else 0.
pub fn indicator(region: &Region, t: &Transition) -> f64 {
    if region.contains(t) {
        1.0
    } else {
        0.0
    }
}

/// `||pred - f||`
pub fn absolute_error(pred: &[f64], t: &Transition) -> f64 {
    debug_assert_eq!(pred.len(), t.label.len());
    pred.iter()
        .zip(&t.label)
        .map(|(p, f)| (p - f) * (p - f))
        .sum::<f64>()
        .sqrt()
}

/// Gradient of [`absolute_error`] in `pred`. Returns zeros at the exact
/// minimum, where the norm is not differentiable.
pub fn absolute_error_gradient(pred: &[f64], t: &Transition) -> Vec<f64> {
    let err = absolute_error(pred, t);
    if err == 0.0 {
        return vec![0.0; pred.len()];
    }
    pred.iter()
        .zip(&t.label)
        .map(|(p, f)| (p - f) / err)
        .collect()
}

/// `||pred - f|| / ||f||`, defined only for labels at or above `floor`.
pub fn normalized_loss(pred: &[f64], t: &Transition, floor: f64) -> Result<f64> {
    let norm = t.label_norm();
    if norm < floor || norm == 0.0 {
        return Err(Error::LabelBelowFloor { norm, floor });
    }
    Ok(absolute_error(pred, t) / norm)
}

/// Gradient of [`normalized_loss`] in `pred`.
pub fn normalized_loss_gradient(pred: &[f64], t: &Transition, floor: f64) -> Result<Vec<f64>> {
    let norm = t.label_norm();
    if norm < floor || norm == 0.0 {
        return Err(Error::LabelBelowFloor { norm, floor });
    }
    let mut g = absolute_error_gradient(pred, t);
    for v in &mut g {
        *v /= norm;
    }
    Ok(g)
}

impl SampleLoss {
    pub fn value(&self, pred: &[f64], t: &Transition, floor: f64) -> Result<f64> {
        match self {
            SampleLoss::AbsoluteError => Ok(absolute_error(pred, t)),
            SampleLoss::NormalizedError => normalized_loss(pred, t, floor),
        }
    }

    pub fn pred_gradient(&self, pred: &[f64], t: &Transition, floor: f64) -> Result<Vec<f64>> {
        match self {
            SampleLoss::AbsoluteError => Ok(absolute_error_gradient(pred, t)),
            SampleLoss::NormalizedError => normalized_loss_gradient(pred, t, floor),
        }
    }
}

/// Everything the training loop needs from one batch.
pub struct BatchTerms {
    pub objective: f64,
    /// `mean(h_i * indicator_i) - bound_i` per constraint; this is both the
    /// constraint estimate and the gradient in the matching multiplier.
    pub constraint_values: Vec<f64>,
    pub param_grads: MlpGradients,
}

impl LearningProblem {
    /// `mean(objective_loss * objective_indicator)` over the batch.
    pub fn objective_estimate(&self, batch: &[Transition], model: &MlpModel) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut total = 0.0;
        for t in batch {
            if indicator(&self.objective_region, t) > 0.0 {
                let pred = model.forward(&t.model_input())?;
                total += self.objective_loss.value(&pred, t, self.label_floor)?;
            }
        }
        Ok(total / batch.len() as f64)
    }

    /// `mean(loss * indicator) - bound` for one constraint.
    pub fn constraint_estimate(
        &self,
        batch: &[Transition],
        model: &MlpModel,
        spec: &ConstraintSpec,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut total = 0.0;
        for t in batch {
            if indicator(&spec.region, t) > 0.0 {
                let pred = model.forward(&t.model_input())?;
                total += spec.loss.value(&pred, t, self.label_floor)?;
            }
        }
        Ok(total / batch.len() as f64 - spec.bound)
    }

    /// Lagrangian estimate: objective plus `lambda . constraint_values`.
    pub fn lagrangian(
        &self,
        batch: &[Transition],
        model: &MlpModel,
        dual: &DualState,
    ) -> Result<f64> {
        let terms = self.batch_terms(batch, model, Some(dual))?;
        let mut value = terms.objective;
        for (l, g) in dual.lambdas.iter().zip(&terms.constraint_values) {
            value += l * g;
        }
        if !value.is_finite() {
            return Err(Error::NonFinite("lagrangian value".into()));
        }
        Ok(value)
    }

    /// Parameter gradient of the Lagrangian and the per-constraint values
    /// (which are the dual gradients).
    pub fn lagrangian_grads(
        &self,
        batch: &[Transition],
        model: &MlpModel,
        dual: &DualState,
    ) -> Result<(MlpGradients, Vec<f64>)> {
        let terms = self.batch_terms(batch, model, Some(dual))?;
        Ok((terms.param_grads, terms.constraint_values))
    }

    /// Single pass over the batch producing objective, constraint values and
    /// parameter gradients. With `dual` absent, constraint terms contribute
    /// values but no parameter gradient.
    pub fn batch_terms(
        &self,
        batch: &[Transition],
        model: &MlpModel,
        dual: Option<&DualState>,
    ) -> Result<BatchTerms> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(d) = dual {
            if d.lambdas.len() != self.constraints.len() {
                return Err(Error::DimMismatch {
                    context: "dual variables",
                    expected: self.constraints.len(),
                    got: d.lambdas.len(),
                });
            }
        }
        let scale = 1.0 / batch.len() as f64;
        let out_dim = model.output_dim();
        let mut objective = 0.0;
        let mut constraint_values: Vec<f64> = self.constraints.iter().map(|c| -c.bound).collect();
        let mut grads = MlpGradients::zeros_like(model);
        let mut upstream = vec![0.0; out_dim];

        for t in batch {
            if !t.is_finite() {
                return Err(Error::NonFinite("transition in batch".into()));
            }
            let obj_active = indicator(&self.objective_region, t) > 0.0;
            let constraint_active = self
                .constraints
                .iter()
                .any(|c| indicator(&c.region, t) > 0.0);
            if !obj_active && !constraint_active {
                continue;
            }

            let input = t.model_input();
            let pred = model.forward(&input)?;
            let mut any_grad = false;
            upstream.fill(0.0);
            if obj_active {
                objective += scale * self.objective_loss.value(&pred, t, self.label_floor)?;
                let g = self
                    .objective_loss
                    .pred_gradient(&pred, t, self.label_floor)?;
                for (u, v) in upstream.iter_mut().zip(&g) {
                    *u += v;
                }
                any_grad = true;
            }
            for (i, c) in self.constraints.iter().enumerate() {
                if indicator(&c.region, t) == 0.0 {
                    continue;
                }
                constraint_values[i] += scale * c.loss.value(&pred, t, self.label_floor)?;
                if let Some(d) = dual {
                    let lambda = d.lambdas[i];
                    if lambda != 0.0 {
                        let g = c.loss.pred_gradient(&pred, t, self.label_floor)?;
                        for (u, v) in upstream.iter_mut().zip(&g) {
                            *u += lambda * v;
                        }
                        any_grad = true;
                    }
                }
            }
            if any_grad {
                model.accumulate_backward(&input, &upstream, scale, &mut grads)?;
            }
        }
        if !objective.is_finite() {
            return Err(Error::NonFinite("objective estimate".into()));
        }
        for (i, v) in constraint_values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("constraint {i} estimate")));
            }
        }
        Ok(BatchTerms {
            objective,
            constraint_values,
            param_grads: grads,
        })
    }
}
