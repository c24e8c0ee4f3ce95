//! Adaptive layer normalization unit.
//!
//! The whole H×W×C feature is standardised with its own mean and standard
//! deviation, then rescaled by a gain γ and shifted by a bias β. Both are
//! scalars predicted from the *un-normalized* input by two independent
//! adaptive learning blocks, so the unit is per-feature: nothing is shared
//! across a batch and channel relations inside a feature are untouched.

use rand::Rng;

use super::alb::{alb_backward, alb_forward, AlbCache, AlbParams};
use super::stats::{layer_stats, standardize_backward, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::numkit::tape::join;
use crate::numkit::{FeatureMap, Parameters, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct AlnuParams {
    pub gamma_block: AlbParams,
    pub beta_block: AlbParams,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct AlnuCache {
    xhat: Vec<f64>,
    inv_std: f64,
    gamma_cache: AlbCache,
    beta_cache: AlbCache,
    pub gamma: f64,
    pub beta: f64,
}

impl AlnuParams {
    pub fn init<R: Rng + ?Sized>(c: usize, rng: &mut R) -> Self {
        AlnuParams {
            gamma_block: AlbParams::init(c, rng),
            beta_block: AlbParams::init(c, rng),
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn init_random<R: Rng + ?Sized>(c: usize, rng: &mut R) -> Self {
        AlnuParams {
            gamma_block: AlbParams::init_random(c, rng),
            beta_block: AlbParams::init_random(c, rng),
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::config("ALNU epsilon must be positive"));
        }
        if self.gamma_block.input_channels() != self.beta_block.input_channels() {
            return Err(Error::config("ALNU blocks disagree on input channels"));
        }
        Ok(())
    }
}

impl Parameters for AlnuParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.gamma_block.visit(&join(prefix, "alb_gamma"), f);
        self.beta_block.visit(&join(prefix, "alb_beta"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.gamma_block.visit_mut(&join(prefix, "alb_gamma"), f);
        self.beta_block.visit_mut(&join(prefix, "alb_beta"), f);
    }
}

pub fn alnu_forward(params: &AlnuParams, f: &FeatureMap) -> Result<FeatureMap> {
    Ok(alnu_forward_cached(params, f)?.0)
}

/// Forward pass returning the cache needed by [`alnu_backward`].
pub fn alnu_forward_cached(params: &AlnuParams, f: &FeatureMap) -> Result<(FeatureMap, AlnuCache)> {
    params.validate()?;
    let (gamma, gamma_cache) = alb_forward(&params.gamma_block, f)?;
    let (beta, beta_cache) = alb_forward(&params.beta_block, f)?;
    let (mu, sigma) = layer_stats(f);
    let inv_std = 1.0 / (sigma * sigma + params.epsilon).sqrt();
    let xhat: Vec<f64> = f.data().iter().map(|v| (v - mu) * inv_std).collect();
    let out = FeatureMap::new(
        f.h(),
        f.w(),
        f.c(),
        xhat.iter().map(|x| x * gamma + beta).collect(),
    )?;
    Ok((
        out,
        AlnuCache {
            xhat,
            inv_std,
            gamma_cache,
            beta_cache,
            gamma,
            beta,
        },
    ))
}

/// Backward through the normalization path and both block paths.
///
/// Parameter gradients accumulate into `grads`; the returned map is dL/df.
pub fn alnu_backward(
    params: &AlnuParams,
    f: &FeatureMap,
    cache: &AlnuCache,
    grad_out: &FeatureMap,
    grads: &mut AlnuParams,
) -> Result<FeatureMap> {
    if grad_out.shape() != f.shape() {
        return Err(Error::shape("ALNU upstream gradient shape mismatch"));
    }
    let g = grad_out.data();
    let d_gamma: f64 = g.iter().zip(&cache.xhat).map(|(a, b)| a * b).sum();
    let d_beta: f64 = g.iter().sum();
    let d_xhat: Vec<f64> = g.iter().map(|v| v * cache.gamma).collect();

    let mut grad_in = FeatureMap::zeros(f.h(), f.w(), f.c());
    standardize_backward(&cache.xhat, cache.inv_std, &d_xhat, grad_in.data_mut());
    alb_backward(
        &params.gamma_block,
        f,
        &cache.gamma_cache,
        d_gamma,
        &mut grads.gamma_block,
        &mut grad_in,
    )?;
    alb_backward(
        &params.beta_block,
        f,
        &cache.beta_cache,
        d_beta,
        &mut grads.beta_block,
        &mut grad_in,
    )?;
    Ok(grad_in)
}
