//! Finite-difference checking used throughout the test suites.
//!
//! Central differences with step `h` approximate dF/dx_i to O(h^2); analytic
//! gradients are compared against them with a relative tolerance and an
//! absolute floor so near-zero components do not dominate the ratio.

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative tolerance for plain network and loss gradients.
pub const DEFAULT_REL_TOL: f64 = 1e-4;

/// Relative tolerance for the full controller chain, which stacks a square
/// root and a normalization on top of the network.
pub const CHAIN_REL_TOL: f64 = 1e-3;

/// Floor under the denominator of the relative error.
pub const DEFAULT_ABS_FLOOR: f64 = 1e-6;

/// Central difference of `f` along coordinate `i` at `x`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += h;
    let up = f(&xp);
    xp[i] = x[i] - h;
    let down = f(&xp);
    (up - down) / (2.0 * h)
}

/// Full numeric gradient of `f` at `x`.
pub fn numeric_gradient(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| central_difference(f, x, i, h))
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`, maximized over components.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}
