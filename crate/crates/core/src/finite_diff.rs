//! Central finite differences, the reference that analytic gradients are checked against.

use crate::error::{Error, Result};
use crate::params::ModelParams;

pub const DEFAULT_EPS: f64 = 1e-5;

/// `(L(θ+ε) - L(θ-ε)) / 2ε` for every entry of the named parameter.
pub fn finite_diff_grad<F>(
    mut loss_fn: F,
    params: &ModelParams<f64>,
    param_name: &str,
    epsilon: f64,
) -> Result<Vec<f64>>
where
    F: FnMut(&ModelParams<f64>) -> Result<f64>,
{
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon {epsilon} must be > 0")));
    }
    let len = params.get(param_name)?.len();
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let orig = probe.get(param_name)?.data()[i];
        probe.get_mut(param_name)?.data_mut()[i] = orig + epsilon;
        let up = loss_fn(&probe)?;
        probe.get_mut(param_name)?.data_mut()[i] = orig - epsilon;
        let down = loss_fn(&probe)?;
        probe.get_mut(param_name)?.data_mut()[i] = orig;
        out.push((up - down) / (2.0 * epsilon));
    }
    Ok(out)
}

/// Central difference of a scalar function.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, epsilon: f64) -> f64 {
    (f(x + epsilon) - f(x - epsilon)) / (2.0 * epsilon)
}
