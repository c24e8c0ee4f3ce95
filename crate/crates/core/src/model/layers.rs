use rand::Rng;

use crate::error::{Error, Result};
use crate::numkit::activation::{relu_backward_in_place, relu_in_place};
use crate::numkit::affine::{affine_backward_into, affine_raw};
use crate::numkit::tape::join;
use crate::numkit::{Parameters, Tensor};

/// Fully connected layer `y = W·x (+ b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Linear {
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, with_bias: bool, rng: &mut R) -> Self {
        Linear {
            weight: Tensor::uniform_fan_in(&[outputs, inputs], inputs, rng),
            bias: with_bias.then(|| Tensor::zeros(&[outputs])),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        affine_raw(&self.weight, self.bias.as_ref().map(Tensor::data), x)
    }

    /// ReLU(W·x + b).
    pub fn forward_relu(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.forward(x)?;
        relu_in_place(&mut y);
        Ok(y)
    }

    /// Accumulates parameter gradients; returns dL/dx.
    pub fn backward(&self, x: &[f64], grad_y: &[f64], grads: &mut Linear) -> Result<Vec<f64>> {
        let mut gx = vec![0.0; x.len()];
        affine_backward_into(
            &self.weight,
            x,
            grad_y,
            grads.weight.data_mut(),
            grads.bias.as_mut().map(|b| b.data_mut()),
            &mut gx,
        )?;
        Ok(gx)
    }

    /// Backward through `ReLU(W·x + b)` given the layer's output `y`.
    pub fn backward_relu(&self, x: &[f64], y: &[f64], grad_y: &[f64], grads: &mut Linear) -> Result<Vec<f64>> {
        if y.len() != grad_y.len() {
            return Err(Error::shape("relu gradient length mismatch"));
        }
        let mut g = grad_y.to_vec();
        relu_backward_in_place(y, &mut g);
        self.backward(x, &g, grads)
    }
}

impl Parameters for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

/// Retrieval neck: per-dimension standardisation with fixed running
/// statistics and a learned scale, no bias.
///
/// Statistics are buffers: they are refreshed from training batches by an
/// exponential moving average and are treated as constants when
/// differentiating, so every sample's neck output depends on that sample only.
#[derive(Debug, Clone, PartialEq)]
pub struct Neck {
    pub scale: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub epsilon: f64,
    pub momentum: f64,
}

impl Neck {
    pub fn new(dim: usize) -> Self {
        Neck {
            scale: Tensor::filled(&[dim], 1.0),
            running_mean: Tensor::zeros(&[dim]),
            running_var: Tensor::filled(&[dim], 1.0),
            epsilon: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn forward(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.dim() {
            return Err(Error::shape(format!(
                "neck expects dim {}, got {}",
                self.dim(),
                f.len()
            )));
        }
        Ok(f.iter()
            .enumerate()
            .map(|(j, v)| self.scale.data()[j] * self.standardize(j, *v))
            .collect())
    }

    #[inline]
    fn standardize(&self, j: usize, v: f64) -> f64 {
        (v - self.running_mean.data()[j]) / (self.running_var.data()[j] + self.epsilon).sqrt()
    }

    /// Accumulates dL/dscale; returns dL/df.
    pub fn backward(&self, f: &[f64], grad_out: &[f64], grads: &mut Neck) -> Vec<f64> {
        let mut gf = vec![0.0; f.len()];
        for j in 0..f.len() {
            let inv = 1.0 / (self.running_var.data()[j] + self.epsilon).sqrt();
            grads.scale.data_mut()[j] += grad_out[j] * self.standardize(j, f[j]);
            gf[j] = grad_out[j] * self.scale.data()[j] * inv;
        }
        gf
    }

    /// Moves the running statistics toward the population statistics of `batch`.
    pub fn update_statistics(&mut self, batch: &[&[f64]]) {
        if batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        for j in 0..self.dim() {
            let mean = batch.iter().map(|f| f[j]).sum::<f64>() / n;
            let var = batch.iter().map(|f| (f[j] - mean) * (f[j] - mean)).sum::<f64>() / n;
            let m = self.momentum;
            let rm = &mut self.running_mean.data_mut()[j];
            *rm = (1.0 - m) * *rm + m * mean;
            let rv = &mut self.running_var.data_mut()[j];
            *rv = (1.0 - m) * *rv + m * var;
        }
    }

    pub fn visit_buffers(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "running_mean"), &self.running_mean);
        f(&join(prefix, "running_var"), &self.running_var);
    }

    pub fn visit_buffers_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}

impl Parameters for Neck {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "scale"), &self.scale);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "scale"), &mut self.scale);
    }
}
