//! Cross-directional center loss.
//!
//! Within each identity the K×M features are summarised two ways: a sample
//! center per sample (mean over modalities) and a modality center per
//! modality (mean over samples). The loss pulls the sample centers together
//! and, weighted by α, the modality centers together:
//!
//! ```text
//! L_S = 1/(2K(K−1)) Σ_i Σ_{k1<k2} ‖C_S[i,k1] − C_S[i,k2]‖²
//! L_M = 1/(2M(M−1)) Σ_i Σ_{m1<m2} ‖C_M[i,m1] − C_M[i,m2]‖²
//! L   = L_S + α·L_M
//! ```
//!
//! Identities are summed, not averaged. The gradient has the closed form
//! `∂L/∂f[k,m] = (C_S[k] − f̄)/(M(K−1)) + α·(C_M[m] − f̄)/(K(M−1))`, where f̄
//! is the identity's mean feature.

use super::batch::BatchFeatures;
use crate::error::{Error, Result};
use crate::numkit::FeatureVec;

fn require_modalities(batch: &BatchFeatures, min: usize) -> Result<()> {
    if batch.modalities() < min {
        let kind = if min == 1 { Error::shape } else { Error::config };
        return Err(kind(format!(
            "need at least {min} modalities per sample, batch has {}",
            batch.modalities()
        )));
    }
    Ok(())
}

fn require_samples(batch: &BatchFeatures, min: usize) -> Result<()> {
    if batch.samples() < min {
        let kind = if min == 1 { Error::shape } else { Error::config };
        return Err(kind(format!(
            "need at least {min} samples per identity, batch has {}",
            batch.samples()
        )));
    }
    Ok(())
}

/// `C_S[i,k]` flattened `[i][k][dim]`.
fn sample_centers_raw(batch: &BatchFeatures) -> Vec<f64> {
    let (p, k, m, d) = (batch.identities(), batch.samples(), batch.modalities(), batch.dim());
    let mut out = vec![0.0; p * k * d];
    let inv = 1.0 / m as f64;
    for i in 0..p {
        for s in 0..k {
            let c = &mut out[(i * k + s) * d..(i * k + s + 1) * d];
            for mo in 0..m {
                for (a, v) in c.iter_mut().zip(batch.get(i, s, mo)) {
                    *a += v;
                }
            }
            c.iter_mut().for_each(|v| *v *= inv);
        }
    }
    out
}

/// `C_M[i,m]` flattened `[i][m][dim]`.
fn modality_centers_raw(batch: &BatchFeatures) -> Vec<f64> {
    let (p, k, m, d) = (batch.identities(), batch.samples(), batch.modalities(), batch.dim());
    let mut out = vec![0.0; p * m * d];
    let inv = 1.0 / k as f64;
    for i in 0..p {
        for mo in 0..m {
            let c = &mut out[(i * m + mo) * d..(i * m + mo + 1) * d];
            for s in 0..k {
                for (a, v) in c.iter_mut().zip(batch.get(i, s, mo)) {
                    *a += v;
                }
            }
            c.iter_mut().for_each(|v| *v *= inv);
        }
    }
    out
}

fn nest(raw: Vec<f64>, rows: usize, cols: usize, dim: usize) -> Result<Vec<Vec<FeatureVec>>> {
    (0..rows)
        .map(|r| {
            (0..cols)
                .map(|c| FeatureVec::new(raw[(r * cols + c) * dim..(r * cols + c + 1) * dim].to_vec()))
                .collect()
        })
        .collect()
}

/// Mean over modalities of every sample, indexed `[identity][sample]`.
pub fn sample_centers(batch: &BatchFeatures) -> Result<Vec<Vec<FeatureVec>>> {
    require_modalities(batch, 1)?;
    nest(sample_centers_raw(batch), batch.identities(), batch.samples(), batch.dim())
}

/// Mean over samples of every modality, indexed `[identity][modality]`.
pub fn modality_centers(batch: &BatchFeatures) -> Result<Vec<Vec<FeatureVec>>> {
    require_samples(batch, 1)?;
    nest(modality_centers_raw(batch), batch.identities(), batch.modalities(), batch.dim())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `Σ_i Σ_{a<b} ‖C[i,a] − C[i,b]‖² / (2n(n−1))` over `n` centers per identity.
fn pairwise_center_loss(centers: &[f64], identities: usize, n: usize, dim: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..identities {
        let block = &centers[i * n * dim..(i + 1) * n * dim];
        for a in 0..n {
            for b in a + 1..n {
                total += sq_dist(&block[a * dim..(a + 1) * dim], &block[b * dim..(b + 1) * dim]);
            }
        }
    }
    total / (2.0 * n as f64 * (n as f64 - 1.0))
}

pub fn cdc_sample_loss(batch: &BatchFeatures) -> Result<f64> {
    require_modalities(batch, 1)?;
    require_samples(batch, 2)?;
    Ok(pairwise_center_loss(
        &sample_centers_raw(batch),
        batch.identities(),
        batch.samples(),
        batch.dim(),
    ))
}

pub fn cdc_modality_loss(batch: &BatchFeatures) -> Result<f64> {
    require_samples(batch, 1)?;
    require_modalities(batch, 2)?;
    Ok(pairwise_center_loss(
        &modality_centers_raw(batch),
        batch.identities(),
        batch.modalities(),
        batch.dim(),
    ))
}

/// `L_S + α·L_M`.
pub fn cdc_loss(batch: &BatchFeatures, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::config(format!("alpha must be nonnegative, got {alpha}")));
    }
    Ok(cdc_sample_loss(batch)? + alpha * cdc_modality_loss(batch)?)
}

/// Heterogeneous-center loss: the modality-center term on its own.
pub fn hc_loss(batch: &BatchFeatures) -> Result<f64> {
    cdc_modality_loss(batch)
}

/// Closed-form gradient of [`cdc_loss`] with respect to every feature.
pub fn cdc_gradient(batch: &BatchFeatures, alpha: f64) -> Result<BatchFeatures> {
    if !(alpha >= 0.0) {
        return Err(Error::config(format!("alpha must be nonnegative, got {alpha}")));
    }
    require_samples(batch, 2)?;
    require_modalities(batch, 2)?;
    Ok(cdc_gradient_weighted(batch, 1.0, alpha))
}

/// Gradient of `ws·L_S + wm·L_M`. A zero weight drops its term entirely, so
/// the corresponding K ≥ 2 or M ≥ 2 requirement only applies to active terms.
pub fn cdc_gradient_weighted(batch: &BatchFeatures, ws: f64, wm: f64) -> BatchFeatures {
    let (p, k, m, d) = (batch.identities(), batch.samples(), batch.modalities(), batch.dim());
    let mut grad = batch.zeros_like();
    let cs = sample_centers_raw(batch);
    let cm = modality_centers_raw(batch);
    let fs = if ws != 0.0 && k >= 2 { ws / (m as f64 * (k as f64 - 1.0)) } else { 0.0 };
    let fm = if wm != 0.0 && m >= 2 { wm / (k as f64 * (m as f64 - 1.0)) } else { 0.0 };
    let mut mean = vec![0.0; d];
    for i in 0..p {
        mean.iter_mut().for_each(|v| *v = 0.0);
        for s in 0..k {
            for (a, v) in mean.iter_mut().zip(&cs[(i * k + s) * d..(i * k + s + 1) * d]) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= k as f64);
        for s in 0..k {
            let c_s = &cs[(i * k + s) * d..(i * k + s + 1) * d];
            for mo in 0..m {
                let c_m = &cm[(i * m + mo) * d..(i * m + mo + 1) * d];
                let g = grad.get_mut(i, s, mo);
                for j in 0..d {
                    let mut v = 0.0;
                    if fs != 0.0 {
                        v += fs * (c_s[j] - mean[j]);
                    }
                    if fm != 0.0 {
                        v += fm * (c_m[j] - mean[j]);
                    }
                    g[j] = v;
                }
            }
        }
    }
    grad
}
