//! Conventional normalizations used as comparison points for ALNU.
//!
//! LN, IN and GN are all group normalizations of a single feature (one
//! group, one group per channel, `g` groups) followed by a per-channel affine
//! map shared across features. BN normalizes each channel across a batch.

use serde::{Deserialize, Serialize};

use super::stats::{mean_var, standardize_backward, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::numkit::tape::join;
use crate::numkit::{FeatureMap, Parameters, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMode {
    #[serde(rename = "bn")]
    Batch,
    #[serde(rename = "in")]
    Instance,
    #[serde(rename = "ln")]
    Layer,
    #[serde(rename = "gn")]
    Group(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineNorm {
    pub mode: NormMode,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct GroupNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl BaselineNorm {
    /// Identity affine (γ = 1, β = 0).
    pub fn new(mode: NormMode, channels: usize) -> Result<Self> {
        if let NormMode::Group(g) = mode {
            if g == 0 || !channels.is_multiple_of(g) {
                return Err(Error::config(format!(
                    "group count {g} does not divide {channels} channels"
                )));
            }
        }
        Ok(BaselineNorm {
            mode,
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            epsilon: DEFAULT_EPSILON,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn groups(&self) -> Result<usize> {
        match self.mode {
            NormMode::Layer => Ok(1),
            NormMode::Instance => Ok(self.channels()),
            NormMode::Group(g) => Ok(g),
            NormMode::Batch => Err(Error::config("batch normalization requires batch context")),
        }
    }

    fn check_channels(&self, f: &FeatureMap) -> Result<()> {
        if f.c() != self.channels() {
            return Err(Error::shape(format!(
                "normalization configured for {} channels, map has {}",
                self.channels(),
                f.c()
            )));
        }
        Ok(())
    }

    /// Per-feature forward. BN is rejected here; use [`BaselineNorm::forward_batch`].
    pub fn forward(&self, f: &FeatureMap) -> Result<FeatureMap> {
        Ok(self.forward_cached(f)?.0)
    }

    pub fn forward_cached(&self, f: &FeatureMap) -> Result<(FeatureMap, GroupNormCache)> {
        self.check_channels(f)?;
        let groups = self.groups()?;
        let c = f.c();
        let per_group = c / groups;
        let mut xhat = vec![0.0; f.len()];
        let mut inv_std = vec![0.0; groups];
        let mut members = Vec::with_capacity(f.len() / groups);
        for (g, inv_slot) in inv_std.iter_mut().enumerate() {
            let chans = g * per_group..(g + 1) * per_group;
            members.clear();
            for (i, v) in f.data().iter().enumerate() {
                if chans.contains(&(i % c)) {
                    members.push(*v);
                }
            }
            let (mu, var) = mean_var(&members);
            let inv = 1.0 / (var + self.epsilon).sqrt();
            *inv_slot = inv;
            for (i, v) in f.data().iter().enumerate() {
                if chans.contains(&(i % c)) {
                    xhat[i] = (v - mu) * inv;
                }
            }
        }
        let out: Vec<f64> = xhat
            .iter()
            .enumerate()
            .map(|(i, x)| x * self.gamma.data()[i % c] + self.beta.data()[i % c])
            .collect();
        Ok((
            FeatureMap::new(f.h(), f.w(), c, out)?,
            GroupNormCache { xhat, inv_std },
        ))
    }

    /// Gradients of the per-feature forward; affine grads accumulate into `grads`.
    pub fn backward(
        &self,
        cache: &GroupNormCache,
        grad_out: &FeatureMap,
        grads: &mut BaselineNorm,
    ) -> Result<FeatureMap> {
        let groups = self.groups()?;
        let c = grad_out.c();
        let per_group = c / groups;
        let g = grad_out.data();
        for (i, (gv, x)) in g.iter().zip(&cache.xhat).enumerate() {
            grads.gamma.data_mut()[i % c] += gv * x;
            grads.beta.data_mut()[i % c] += gv;
        }
        let mut grad_in = FeatureMap::zeros(grad_out.h(), grad_out.w(), c);
        for grp in 0..groups {
            let chans = grp * per_group..(grp + 1) * per_group;
            let idx: Vec<usize> = (0..g.len()).filter(|i| chans.contains(&(i % c))).collect();
            let xh: Vec<f64> = idx.iter().map(|&i| cache.xhat[i]).collect();
            let dxh: Vec<f64> = idx.iter().map(|&i| g[i] * self.gamma.data()[i % c]).collect();
            let mut out = vec![0.0; idx.len()];
            standardize_backward(&xh, cache.inv_std[grp], &dxh, &mut out);
            for (&i, o) in idx.iter().zip(out) {
                grad_in.data_mut()[i] += o;
            }
        }
        Ok(grad_in)
    }

    /// Batch forward. BN uses per-channel statistics over every feature of the
    /// batch; the other modes normalize each feature independently.
    pub fn forward_batch(&self, batch: &[FeatureMap]) -> Result<Vec<FeatureMap>> {
        if self.mode != NormMode::Batch {
            return batch.iter().map(|f| self.forward(f)).collect();
        }
        let first = batch
            .first()
            .ok_or_else(|| Error::input("batch normalization over an empty batch"))?;
        let shape = first.shape();
        for f in batch {
            if f.shape() != shape {
                return Err(Error::shape("batch features have different shapes"));
            }
            self.check_channels(f)?;
        }
        let c = shape.2;
        let mut out: Vec<FeatureMap> = batch.to_vec();
        for ch in 0..c {
            let vals: Vec<f64> = batch
                .iter()
                .flat_map(|f| f.data().iter().skip(ch).step_by(c).copied())
                .collect();
            let (mu, var) = mean_var(&vals);
            let inv = 1.0 / (var + self.epsilon).sqrt();
            let (gm, bt) = (self.gamma.data()[ch], self.beta.data()[ch]);
            for o in out.iter_mut() {
                for v in o.data_mut().iter_mut().skip(ch).step_by(c) {
                    *v = (*v - mu) * inv * gm + bt;
                }
            }
        }
        Ok(out)
    }
}

impl Parameters for BaselineNorm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
    }
}
