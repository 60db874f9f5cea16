//! Dense feed-forward networks with reverse-mode gradients.
//!
//! The architecture is fixed: affine layers with per-channel parametric
//! rectified linear units (PReLU) on every hidden layer and a linear output
//! layer. All math is f64. [`MlpModel::backward`] differentiates with respect
//! to every parameter and with respect to the input; the input gradient is
//! what the action optimizer chains through.

mod adam;

pub use adam::AdamState;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Initial slope of the parametric rectified linear units.
pub const DEFAULT_PRELU_SLOPE: f64 = 0.25;

/// Parametric rectified linear unit: `x` for `x >= 0`, otherwise `slope * x`.
#[inline]
pub fn prelu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Derivative of [`prelu`] in `x`. The kink at zero takes the linear branch.
#[inline]
pub fn prelu_dx(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        slope
    }
}

/// Derivative of [`prelu`] in the slope parameter.
#[inline]
fn prelu_dslope(x: f64) -> f64 {
    if x < 0.0 {
        x
    } else {
        0.0
    }
}

/// Multi-layer perceptron. `layer_sizes` runs input first, output last;
/// weights are row-major `(out, in)` per affine layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    /// One learnable slope per hidden unit; empty for the output layer,
    /// so there is one entry per hidden layer.
    prelu_slopes: Vec<Vec<f64>>,
}

/// Per-parameter gradients, laid out exactly like the model.
#[derive(Clone, Debug)]
pub struct MlpGradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub prelu_slopes: Vec<Vec<f64>>,
}

impl MlpModel {
    /// Random initialization: uniform weights with limit `sqrt(6 / fan_in)`,
    /// zero biases, slopes at [`DEFAULT_PRELU_SLOPE`].
    ///
    /// Panics if fewer than two layer sizes are given or any size is zero.
    pub fn init(layer_sizes: &[usize], rng: &mut impl Rng) -> MlpModel {
        let mut model = MlpModel::zeros(layer_sizes);
        for (l, w) in model.weights.iter_mut().enumerate() {
            let limit = (6.0 / layer_sizes[l] as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.gen_range(-limit..limit);
            }
        }
        model
    }

    /// All-zero parameters with slopes at [`DEFAULT_PRELU_SLOPE`].
    pub fn zeros(layer_sizes: &[usize]) -> MlpModel {
        assert!(
            layer_sizes.len() >= 2,
            "need at least input and output sizes"
        );
        assert!(
            layer_sizes.iter().all(|&n| n > 0),
            "layer sizes must be positive"
        );
        let n_layers = layer_sizes.len() - 1;
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        let mut prelu_slopes = Vec::with_capacity(n_layers - 1);
        for l in 0..n_layers {
            weights.push(vec![0.0; layer_sizes[l] * layer_sizes[l + 1]]);
            biases.push(vec![0.0; layer_sizes[l + 1]]);
            if l + 1 < n_layers {
                prelu_slopes.push(vec![DEFAULT_PRELU_SLOPE; layer_sizes[l + 1]]);
            }
        }
        MlpModel {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            prelu_slopes,
        }
    }

    /// Rebuilds a model from stored parts, validating every shape.
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        prelu_slopes: Vec<Vec<f64>>,
    ) -> Result<MlpModel> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Config(format!(
                "invalid layer_sizes {layer_sizes:?}"
            )));
        }
        let n_layers = layer_sizes.len() - 1;
        let check = |context: &'static str, expected: usize, got: usize| -> Result<()> {
            if expected != got {
                return Err(Error::DimMismatch {
                    context,
                    expected,
                    got,
                });
            }
            Ok(())
        };
        check("weight layer count", n_layers, weights.len())?;
        check("bias layer count", n_layers, biases.len())?;
        check("slope layer count", n_layers - 1, prelu_slopes.len())?;
        for l in 0..n_layers {
            check(
                "weight matrix size",
                layer_sizes[l] * layer_sizes[l + 1],
                weights[l].len(),
            )?;
            check("bias size", layer_sizes[l + 1], biases[l].len())?;
            if l + 1 < n_layers {
                check("slope size", layer_sizes[l + 1], prelu_slopes[l].len())?;
            }
        }
        Ok(MlpModel {
            layer_sizes,
            weights,
            biases,
            prelu_slopes,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn prelu_slopes(&self) -> &[Vec<f64>] {
        &self.prelu_slopes
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
            + self.prelu_slopes.iter().map(Vec::len).sum::<usize>()
    }

    /// Parameter order: per layer weights then biases, then all slope
    /// vectors. [`MlpGradients::flatten`] matches.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in 0..self.weights.len() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        for s in &self.prelu_slopes {
            out.extend_from_slice(s);
        }
        out
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimMismatch {
                context: "flat parameter vector",
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut at = 0;
        for l in 0..self.weights.len() {
            let nw = self.weights[l].len();
            self.weights[l].copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = self.biases[l].len();
            self.biases[l].copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        for s in &mut self.prelu_slopes {
            let n = s.len();
            s.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        for (l, w) in self.weights.iter().enumerate() {
            if !w.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("weights of layer {l}")));
            }
        }
        for (l, b) in self.biases.iter().enumerate() {
            if !b.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("biases of layer {l}")));
            }
        }
        for (l, s) in self.prelu_slopes.iter().enumerate() {
            if !s.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("slopes of layer {l}")));
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut h = input.to_vec();
        let mut z = Vec::new();
        for l in 0..self.weights.len() {
            z.resize(self.layer_sizes[l + 1], 0.0);
            affine(&self.weights[l], &self.biases[l], &h, &mut z);
            if l < self.prelu_slopes.len() {
                for (v, &a) in z.iter_mut().zip(&self.prelu_slopes[l]) {
                    *v = prelu(*v, a);
                }
            }
            std::mem::swap(&mut h, &mut z);
        }
        Ok(h)
    }

    /// Gradients of `upstream . output` with respect to all parameters and
    /// the input.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(MlpGradients, Vec<f64>)> {
        let mut grads = MlpGradients::zeros_like(self);
        let input_grad = self.backprop(input, upstream, 1.0, Some(&mut grads))?;
        Ok((grads, input_grad))
    }

    /// Adds `scale` times the parameter gradients of `upstream . output` into
    /// `into`, skipping input-gradient extraction. Batch accumulation path.
    pub fn accumulate_backward(
        &self,
        input: &[f64],
        upstream: &[f64],
        scale: f64,
        into: &mut MlpGradients,
    ) -> Result<()> {
        self.backprop(input, upstream, scale, Some(into))?;
        Ok(())
    }

    /// Gradient of `upstream . output` with respect to the input only. The
    /// action optimizer calls this once per descent step, so it skips all
    /// parameter-gradient work.
    pub fn input_gradient(&self, input: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        self.backprop(input, upstream, 1.0, None)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimMismatch {
                context: "network input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    fn backprop(
        &self,
        input: &[f64],
        upstream: &[f64],
        scale: f64,
        mut grads: Option<&mut MlpGradients>,
    ) -> Result<Vec<f64>> {
        self.check_input(input)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::DimMismatch {
                context: "upstream gradient",
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }

        let n_layers = self.weights.len();
        // Forward trace: pre-activations per layer and the activations that
        // feed each layer (acts[l] feeds layer l).
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        acts.push(input.to_vec());
        for l in 0..n_layers {
            let mut z = vec![0.0; self.layer_sizes[l + 1]];
            affine(&self.weights[l], &self.biases[l], &acts[l], &mut z);
            pre.push(z);
            if l + 1 < n_layers {
                let slopes = &self.prelu_slopes[l];
                let h = pre[l]
                    .iter()
                    .zip(slopes)
                    .map(|(&z, &a)| prelu(z, a))
                    .collect();
                acts.push(h);
            }
        }

        // delta holds the gradient at the pre-activations of layer l.
        let mut delta: Vec<f64> = upstream.iter().map(|u| u * scale).collect();
        for l in (0..n_layers).rev() {
            if let Some(g) = grads.as_deref_mut() {
                let n_in = self.layer_sizes[l];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &mut g.weights[l][o * n_in..(o + 1) * n_in];
                    for (w, &x) in row.iter_mut().zip(&acts[l]) {
                        *w += d * x;
                    }
                    g.biases[l][o] += d;
                }
            }
            let mut down = vec![0.0; self.layer_sizes[l]];
            let n_in = self.layer_sizes[l];
            for (o, &d) in delta.iter().enumerate() {
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                for (dst, &w) in down.iter_mut().zip(row) {
                    *dst += d * w;
                }
            }
            if l == 0 {
                return Ok(down);
            }
            // `down` is the gradient at the activations of layer l-1; pull it
            // through the PReLU.
            let slopes = &self.prelu_slopes[l - 1];
            let z = &pre[l - 1];
            if let Some(g) = grads.as_deref_mut() {
                for (c, &dh) in down.iter().enumerate() {
                    g.prelu_slopes[l - 1][c] += dh * prelu_dslope(z[c]);
                }
            }
            for (c, v) in down.iter_mut().enumerate() {
                *v *= prelu_dx(z[c], slopes[c]);
            }
            delta = down;
        }
        unreachable!("loop returns at l == 0");
    }
}

fn affine(weights: &[f64], biases: &[f64], input: &[f64], out: &mut [f64]) {
    let n_in = input.len();
    for (o, acc) in out.iter_mut().enumerate() {
        let row = &weights[o * n_in..(o + 1) * n_in];
        let mut sum = biases[o];
        for (&w, &x) in row.iter().zip(input) {
            sum += w * x;
        }
        *acc = sum;
    }
}

impl MlpGradients {
    pub fn zeros_like(model: &MlpModel) -> MlpGradients {
        MlpGradients {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            prelu_slopes: model
                .prelu_slopes
                .iter()
                .map(|s| vec![0.0; s.len()])
                .collect(),
        }
    }

    pub fn reset(&mut self) {
        for w in &mut self.weights {
            w.fill(0.0);
        }
        for b in &mut self.biases {
            b.fill(0.0);
        }
        for s in &mut self.prelu_slopes {
            s.fill(0.0);
        }
    }

    /// Same parameter order as [`MlpModel::flatten_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let total: usize = self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
            + self.prelu_slopes.iter().map(Vec::len).sum::<usize>();
        let mut out = Vec::with_capacity(total);
        for l in 0..self.weights.len() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        for s in &self.prelu_slopes {
            out.extend_from_slice(s);
        }
        out
    }
}
