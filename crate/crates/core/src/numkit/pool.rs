use serde::{Deserialize, Serialize};

use super::tensor::{FeatureMap, FeatureVec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Avg,
    Max,
}

/// Per-channel global average or maximum over the spatial extent.
pub fn global_pool(input: &FeatureMap, mode: PoolMode) -> Result<FeatureVec> {
    FeatureVec::new(global_pool_raw(input, mode)?)
}

pub(crate) fn global_pool_raw(input: &FeatureMap, mode: PoolMode) -> Result<Vec<f64>> {
    if input.is_empty() {
        return Err(Error::shape("cannot pool an empty map"));
    }
    let c = input.c();
    let pixels = input.h() * input.w();
    let out = match mode {
        PoolMode::Avg => {
            let mut sums = vec![0.0; c];
            for px in input.data().chunks(c) {
                for (s, v) in sums.iter_mut().zip(px) {
                    *s += v;
                }
            }
            sums.into_iter().map(|s| s / pixels as f64).collect()
        }
        PoolMode::Max => argmax_per_channel(input)
            .into_iter()
            .map(|i| input.data()[i])
            .collect(),
    };
    Ok(out)
}

/// Flat index of the first (row-major) maximum of every channel.
pub fn argmax_per_channel(input: &FeatureMap) -> Vec<usize> {
    let c = input.c();
    let mut best: Vec<usize> = (0..c).collect();
    for (p, px) in input.data().chunks(c).enumerate().skip(1) {
        for ch in 0..c {
            if px[ch] > input.data()[best[ch]] {
                best[ch] = p * c + ch;
            }
        }
    }
    best
}

/// Gradient w.r.t. the input map: avg spreads uniformly, max routes to the first argmax.
pub fn global_pool_backward(input: &FeatureMap, mode: PoolMode, grad: &[f64]) -> Result<FeatureMap> {
    let mut out = FeatureMap::zeros(input.h(), input.w(), input.c());
    global_pool_backward_into(input, mode, grad, &mut out)?;
    Ok(out)
}

pub fn global_pool_backward_into(
    input: &FeatureMap,
    mode: PoolMode,
    grad: &[f64],
    grad_input: &mut FeatureMap,
) -> Result<()> {
    let c = input.c();
    if grad.len() != c || grad_input.shape() != input.shape() {
        return Err(Error::shape("pool gradient does not match channel count"));
    }
    match mode {
        PoolMode::Avg => {
            let inv = 1.0 / (input.h() * input.w()) as f64;
            for px in grad_input.data_mut().chunks_mut(c) {
                for (g, u) in px.iter_mut().zip(grad) {
                    *g += u * inv;
                }
            }
        }
        PoolMode::Max => {
            for (ch, idx) in argmax_per_channel(input).into_iter().enumerate() {
                grad_input.data_mut()[idx] += grad[ch];
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_map_average() {
        let m = FeatureMap::filled(3, 4, 2, 1.25);
        let v = global_pool(&m, PoolMode::Avg).unwrap();
        assert_eq!(v.as_slice(), &[1.25, 1.25]);
    }

    #[test]
    fn max_of_three() {
        let m = FeatureMap::new(1, 3, 1, vec![1.0, 5.0, 3.0]).unwrap();
        assert_eq!(global_pool(&m, PoolMode::Max).unwrap().as_slice(), &[5.0]);
    }

    #[test]
    fn average_of_four() {
        let m = FeatureMap::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_pool(&m, PoolMode::Avg).unwrap().as_slice(), &[2.5]);
    }

    #[test]
    fn max_ties_route_to_first_occurrence() {
        let m = FeatureMap::new(2, 2, 1, vec![0.0, 7.0, 7.0, 7.0]).unwrap();
        let g = global_pool_backward(&m, PoolMode::Max, &[1.0]).unwrap();
        assert_eq!(g.data(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn avg_backward_is_uniform() {
        let m = FeatureMap::zeros(2, 2, 1);
        let g = global_pool_backward(&m, PoolMode::Avg, &[2.0]).unwrap();
        assert_eq!(g.data(), &[0.5; 4]);
    }

    proptest! {
        #[test]
        fn avg_equals_sum_over_pixels(
            h in 1usize..5, w in 1usize..5, c in 1usize..4,
            seed in proptest::collection::vec(-10.0f64..10.0, 64)
        ) {
            let data: Vec<f64> = (0..h * w * c).map(|i| seed[i % seed.len()] + i as f64 * 0.01).collect();
            let m = FeatureMap::new(h, w, c, data).unwrap();
            let avg = global_pool(&m, PoolMode::Avg).unwrap();
            for ch in 0..c {
                let mut s = 0.0;
                for y in 0..h { for x in 0..w { s += m.at(y, x, ch); } }
                prop_assert!((avg[ch] - s / (h * w) as f64).abs() < 1e-12);
            }
        }
    }
}
