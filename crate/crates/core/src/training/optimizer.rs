use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moments in parameter visiting order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new<P: Parameters + ?Sized>(params: &P, config: AdamConfig) -> Self {
        let n = params.param_count();
        OptimizerState {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
///
/// A non-finite gradient aborts before anything is modified.
pub fn adam_step<P: Parameters + ?Sized>(
    state: &mut OptimizerState,
    params: &mut P,
    grads: &P,
    lr: f64,
) -> Result<()> {
    let g = grads.flatten();
    if g.len() != state.m.len() || params.param_count() != g.len() {
        return Err(Error::shape("optimizer state does not match parameters"));
    }
    let next = state.step + 1;
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::Training {
            step: next,
            msg: format!("non-finite gradient at flat index {i}"),
        });
    }
    let AdamConfig { beta1, beta2, epsilon } = state.config;
    let bc1 = 1.0 - beta1.powi(next as i32);
    let bc2 = 1.0 - beta2.powi(next as i32);
    for ((m, v), &gi) in state.m.iter_mut().zip(state.v.iter_mut()).zip(&g) {
        *m = beta1 * *m + (1.0 - beta1) * gi;
        *v = beta2 * *v + (1.0 - beta2) * gi * gi;
    }
    let mut offset = 0;
    let (ms, vs) = (&state.m, &state.v);
    params.visit_mut("", &mut |_, t| {
        for (j, p) in t.data_mut().iter_mut().enumerate() {
            let mh = ms[offset + j] / bc1;
            let vh = vs[offset + j] / bc2;
            *p -= lr * mh / (vh.sqrt() + epsilon);
        }
        offset += t.len();
    });
    state.step = next;
    Ok(())
}
