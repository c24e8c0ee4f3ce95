use crate::error::{Error, Result};
use crate::numkit::FeatureMap;

/// Default stabiliser under the square root.
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Mean and population standard deviation over all H·W·C entries.
pub fn layer_stats(f: &FeatureMap) -> (f64, f64) {
    let (mu, var) = mean_var(f.data());
    (mu, var.sqrt())
}

/// Mean and population variance of a slice. Empty input yields `(0, 0)`.
pub(crate) fn mean_var(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mu = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    (mu, var)
}

/// `(f − μ)/√(σ² + ε)` element-wise.
pub fn normalize(f: &FeatureMap, mu: f64, sigma: f64, epsilon: f64) -> Result<FeatureMap> {
    if !(epsilon > 0.0) {
        return Err(Error::config(format!("epsilon must be positive, got {epsilon}")));
    }
    let inv = 1.0 / (sigma * sigma + epsilon).sqrt();
    Ok(f.map(|v| (v - mu) * inv))
}

/// Backward of whole-slice standardisation where μ, σ are themselves
/// functions of the input.
///
/// With `x̂ = (x − μ)/s`, `s = √(σ² + ε)` over `n` entries:
/// `dx = (g − mean(g) − x̂·mean(g·x̂)) / s`.
pub(crate) fn standardize_backward(xhat: &[f64], inv_std: f64, grad: &[f64], out: &mut [f64]) {
    let n = xhat.len() as f64;
    let mean_g = grad.iter().sum::<f64>() / n;
    let mean_gx = grad.iter().zip(xhat).map(|(g, x)| g * x).sum::<f64>() / n;
    for ((o, g), x) in out.iter_mut().zip(grad).zip(xhat) {
        *o += (g - mean_g - x * mean_gx) * inv_std;
    }
}
