//! Adaptive learning block: predicts one scalar in (0, 1) from a feature map.
//!
//! conv3×3 → ReLU → conv3×3 → ReLU → (global avg ∥ global max, summed)
//! → 1×1 conv to one channel → sigmoid.

use rand::Rng;

use crate::error::Result;
use crate::numkit::activation::{relu_backward_in_place, relu_in_place};
use crate::numkit::conv::{conv2d, conv2d_backward_into};
use crate::numkit::pool::{global_pool_backward_into, global_pool_raw};
use crate::numkit::tape::join;
use crate::numkit::{sigmoid, sigmoid_backward, FeatureMap, Parameters, PoolMode, Tensor};

/// Hidden width of the block for an input with `c` channels: `max(c/4, 4)`.
pub fn hidden_channels(c: usize) -> usize {
    (c / 4).max(4)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlbParams {
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    pub conv3_w: Tensor,
    pub conv3_b: Tensor,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AlbCache {
    a1: FeatureMap,
    a2: FeatureMap,
    pooled: FeatureMap,
    pub output: f64,
}

impl AlbParams {
    /// Random 3×3 stages, zeroed final stage so the block starts at sigmoid(0) = 0.5.
    pub fn init<R: Rng + ?Sized>(c: usize, rng: &mut R) -> Self {
        let hc = hidden_channels(c);
        AlbParams {
            conv1_w: Tensor::uniform_fan_in(&[hc, 3, 3, c], 9 * c, rng),
            conv1_b: Tensor::zeros(&[hc]),
            conv2_w: Tensor::uniform_fan_in(&[hc, 3, 3, hc], 9 * hc, rng),
            conv2_b: Tensor::zeros(&[hc]),
            conv3_w: Tensor::zeros(&[1, 1, 1, hc]),
            conv3_b: Tensor::zeros(&[1]),
        }
    }

    /// Same as [`AlbParams::init`] but with a random final stage too.
    pub fn init_random<R: Rng + ?Sized>(c: usize, rng: &mut R) -> Self {
        let mut p = Self::init(c, rng);
        let hc = hidden_channels(c);
        p.conv3_w = Tensor::uniform_fan_in(&[1, 1, 1, hc], hc, rng);
        p.conv3_b = Tensor::uniform_fan_in(&[1], hc, rng);
        p
    }

    pub fn input_channels(&self) -> usize {
        self.conv1_w.shape()[3]
    }
}

impl Parameters for AlbParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "conv1.weight"), &self.conv1_w);
        f(&join(prefix, "conv1.bias"), &self.conv1_b);
        f(&join(prefix, "conv2.weight"), &self.conv2_w);
        f(&join(prefix, "conv2.bias"), &self.conv2_b);
        f(&join(prefix, "conv3.weight"), &self.conv3_w);
        f(&join(prefix, "conv3.bias"), &self.conv3_b);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "conv1.weight"), &mut self.conv1_w);
        f(&join(prefix, "conv1.bias"), &mut self.conv1_b);
        f(&join(prefix, "conv2.weight"), &mut self.conv2_w);
        f(&join(prefix, "conv2.bias"), &mut self.conv2_b);
        f(&join(prefix, "conv3.weight"), &mut self.conv3_w);
        f(&join(prefix, "conv3.bias"), &mut self.conv3_b);
    }
}

pub fn alb_forward(params: &AlbParams, f: &FeatureMap) -> Result<(f64, AlbCache)> {
    let mut a1 = conv2d(f, &params.conv1_w, Some(params.conv1_b.data()), 1, 1)?;
    relu_in_place(a1.data_mut());
    let mut a2 = conv2d(&a1, &params.conv2_w, Some(params.conv2_b.data()), 1, 1)?;
    relu_in_place(a2.data_mut());
    let avg = global_pool_raw(&a2, PoolMode::Avg)?;
    let max = global_pool_raw(&a2, PoolMode::Max)?;
    let summed: Vec<f64> = avg.iter().zip(&max).map(|(a, m)| a + m).collect();
    let pooled = FeatureMap::new(1, 1, summed.len(), summed)?;
    let z = conv2d(&pooled, &params.conv3_w, Some(params.conv3_b.data()), 1, 0)?;
    // single 1×1×1 map; the global reduction is the lone entry
    let output = sigmoid(z.data()[0]);
    Ok((
        output,
        AlbCache {
            a1,
            a2,
            pooled,
            output,
        },
    ))
}

/// Accumulates parameter gradients into `grads` and the input gradient into `grad_input`.
pub fn alb_backward(
    params: &AlbParams,
    f: &FeatureMap,
    cache: &AlbCache,
    grad_output: f64,
    grads: &mut AlbParams,
    grad_input: &mut FeatureMap,
) -> Result<()> {
    let dz = grad_output * sigmoid_backward(cache.output);
    let dz_map = FeatureMap::new(1, 1, 1, vec![dz])?;
    let mut d_pooled = FeatureMap::zeros(1, 1, cache.pooled.c());
    conv2d_backward_into(
        &cache.pooled,
        &params.conv3_w,
        1,
        0,
        &dz_map,
        &mut d_pooled,
        grads.conv3_w.data_mut(),
        Some(grads.conv3_b.data_mut()),
    )?;

    let (h, w, c) = cache.a2.shape();
    let mut d_a2 = FeatureMap::zeros(h, w, c);
    global_pool_backward_into(&cache.a2, PoolMode::Avg, d_pooled.data(), &mut d_a2)?;
    global_pool_backward_into(&cache.a2, PoolMode::Max, d_pooled.data(), &mut d_a2)?;
    relu_backward_in_place(cache.a2.data(), d_a2.data_mut());

    let (h1, w1, c1) = cache.a1.shape();
    let mut d_a1 = FeatureMap::zeros(h1, w1, c1);
    conv2d_backward_into(
        &cache.a1,
        &params.conv2_w,
        1,
        1,
        &d_a2,
        &mut d_a1,
        grads.conv2_w.data_mut(),
        Some(grads.conv2_b.data_mut()),
    )?;
    relu_backward_in_place(cache.a1.data(), d_a1.data_mut());

    conv2d_backward_into(
        f,
        &params.conv1_w,
        1,
        1,
        &d_a1,
        grad_input,
        grads.conv1_w.data_mut(),
        Some(grads.conv1_b.data_mut()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::finite_diff::{finite_diff_grad, max_relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> FeatureMap {
        let data = (0..h * w * c).map(|_| rng.random_range(-2.0..2.0)).collect();
        FeatureMap::new(h, w, c, data).unwrap()
    }

    #[test]
    fn output_in_open_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let p = AlbParams::init_random(8, &mut rng);
            let f = random_map(&mut rng, 4, 4, 8);
            let (y, _) = alb_forward(&p, &f).unwrap();
            assert!(y > 0.0 && y < 1.0);
        }
    }

    #[test]
    fn zero_final_stage_gives_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = AlbParams::init(8, &mut rng);
        let f = random_map(&mut rng, 4, 4, 8);
        assert_eq!(alb_forward(&p, &f).unwrap().0, 0.5);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut p = AlbParams::init_random(4, &mut rng);
        // bias the hidden stages positive so few units sit near the ReLU kink
        p.conv1_b.fill(0.3);
        p.conv2_b.fill(0.3);
        let f = random_map(&mut rng, 3, 3, 4);
        let (_, cache) = alb_forward(&p, &f).unwrap();
        let mut grads = p.clone();
        grads.zero_all();
        let mut gin = FeatureMap::zeros(3, 3, 4);
        alb_backward(&p, &f, &cache, 1.0, &mut grads, &mut gin).unwrap();

        let flat = p.flatten();
        let fd = finite_diff_grad(
            |x| {
                let mut q = p.clone();
                q.load_flat(x).unwrap();
                alb_forward(&q, &f).unwrap().0
            },
            &flat,
            1e-6,
        )
        .unwrap();
        assert!(max_relative_error(&grads.flatten(), &fd) < 1e-5);

        let fd_in = finite_diff_grad(
            |x| {
                let m = FeatureMap::new(3, 3, 4, x.to_vec()).unwrap();
                alb_forward(&p, &m).unwrap().0
            },
            f.data(),
            1e-6,
        )
        .unwrap();
        assert!(max_relative_error(gin.data(), &fd_in) < 1e-5);
    }
}
