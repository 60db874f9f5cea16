//! Forward-model implementations the controller can differentiate through.

use crate::error::{Error, Result};
use crate::nn::MlpModel;
use crate::sim::{impact_map, paddle_normal, ImpactInputs, SimConfig, MODEL_INPUT_DIM, MODEL_OUTPUT_DIM};
use crate::vec3::Vec3;

use super::Dynamics;

/// Closed-form reflection model with an optional roll offset on its normal.
/// With `roll_offset = 0` this is the true contact map; a nonzero offset
/// reproduces a miscalibrated orientation reading.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticDynamics {
    pub restitution: f64,
    pub roll_offset: f64,
}

impl AnalyticDynamics {
    /// The simulator's own contact map.
    pub fn exact(config: &SimConfig) -> AnalyticDynamics {
        AnalyticDynamics {
            restitution: config.restitution,
            roll_offset: 0.0,
        }
    }

    /// The flawed model: same law, roll read with the configured error.
    pub fn faulty(config: &SimConfig) -> AnalyticDynamics {
        AnalyticDynamics {
            restitution: config.restitution,
            roll_offset: config.observation_roll_error,
        }
    }

    fn predict_vec(&self, inputs: &ImpactInputs) -> Vec3 {
        let n = paddle_normal(inputs.roll + self.roll_offset, inputs.pitch);
        impact_map(inputs.ball_vel, inputs.paddle_vel, n, self.restitution)
    }
}

impl Dynamics for AnalyticDynamics {
    fn input_dim(&self) -> usize {
        MODEL_INPUT_DIM
    }

    fn output_dim(&self) -> usize {
        MODEL_OUTPUT_DIM
    }

    fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let inputs = ImpactInputs::from_model_input(input)?;
        Ok(self.predict_vec(&inputs).to_array().to_vec())
    }

    fn input_vjp(&self, input: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        if upstream.len() != MODEL_OUTPUT_DIM {
            return Err(Error::DimMismatch {
                context: "upstream gradient",
                expected: MODEL_OUTPUT_DIM,
                got: upstream.len(),
            });
        }
        let inputs = ImpactInputs::from_model_input(input)?;
        let alpha = self.restitution;
        let r = inputs.roll + self.roll_offset;
        let p = inputs.pitch;
        let n = paddle_normal(r, p);
        let dn_droll = Vec3::new(-r.sin() * p.sin(), -r.cos(), -r.sin() * p.cos());
        let dn_dpitch = Vec3::new(r.cos() * p.cos(), 0.0, -r.cos() * p.sin());
        let u = Vec3::from_slice(upstream);
        let v_rel = inputs.ball_vel - inputs.paddle_vel;

        // v_out = alpha (v_rel - 2 n (n . v_rel)) + v_paddle.
        // Pulling u back through the reflection gives alpha (u - 2 n (n . u))
        // for the v_rel slot; the normal's angle sensitivities follow the
        // product rule on n (n . v_rel).
        let refl_u = alpha * (u - 2.0 * n.dot(u) * n);
        let angle = |dn: Vec3| -2.0 * alpha * (u.dot(dn) * n.dot(v_rel) + u.dot(n) * dn.dot(v_rel));
        let d_ball = refl_u;
        let d_paddle = u - refl_u;
        Ok(vec![
            d_ball.x,
            d_ball.y,
            d_ball.z,
            angle(dn_droll),
            angle(dn_dpitch),
            d_paddle.x,
            d_paddle.y,
            d_paddle.z,
        ])
    }
}

/// Analytic base plus a learned correction network. The network is trained
/// on the gap between observed rebounds and the base prediction, so the sum
/// is the deployed model.
#[derive(Clone, Debug)]
pub struct ResidualDynamics {
    pub base: AnalyticDynamics,
    pub correction: MlpModel,
}

impl ResidualDynamics {
    pub fn new(base: AnalyticDynamics, correction: MlpModel) -> Result<ResidualDynamics> {
        if MlpModel::input_dim(&correction) != MODEL_INPUT_DIM
            || MlpModel::output_dim(&correction) != MODEL_OUTPUT_DIM
        {
            return Err(Error::Config(format!(
                "correction network must map {} -> {}, got {} -> {}",
                MODEL_INPUT_DIM,
                MODEL_OUTPUT_DIM,
                MlpModel::input_dim(&correction),
                MlpModel::output_dim(&correction),
            )));
        }
        Ok(ResidualDynamics { base, correction })
    }
}

impl Dynamics for ResidualDynamics {
    fn input_dim(&self) -> usize {
        MODEL_INPUT_DIM
    }

    fn output_dim(&self) -> usize {
        MODEL_OUTPUT_DIM
    }

    fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.base.predict(input)?;
        let corr = self.correction.forward(input)?;
        for (o, c) in out.iter_mut().zip(&corr) {
            *o += c;
        }
        Ok(out)
    }

    fn input_vjp(&self, input: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.base.input_vjp(input, upstream)?;
        let gc = self.correction.input_gradient(input, upstream)?;
        for (a, b) in g.iter_mut().zip(&gc) {
            *a += b;
        }
        Ok(g)
    }
}
