//! Classic center loss: every feature, whatever its modality, is pulled
//! toward a learned center of its identity.
//!
//! `L = 1/(2N) Σ ‖f − c_label‖²` with N the number of features in the batch
//! (P·K·M). Both features and centers receive gradients.

use super::batch::BatchFeatures;
use crate::error::{Error, Result};
use crate::numkit::Tensor;

/// Learned centers, one row per class label.
pub type CenterBank = Tensor;

fn center_row(centers: &CenterBank, label: usize, dim: usize) -> Result<&[f64]> {
    if centers.shape().len() != 2 || centers.cols() != dim {
        return Err(Error::shape(format!(
            "center bank shape {:?} does not match feature dim {dim}",
            centers.shape()
        )));
    }
    if label >= centers.rows() {
        return Err(Error::config(format!("no center for identity label {label}")));
    }
    Ok(&centers.data()[label * dim..(label + 1) * dim])
}

pub fn center_loss(batch: &BatchFeatures, centers: &CenterBank) -> Result<f64> {
    let n = (batch.identities() * batch.samples() * batch.modalities()) as f64;
    if n == 0.0 {
        return Err(Error::shape("center loss over an empty batch"));
    }
    let mut total = 0.0;
    for (i, &label) in batch.labels().iter().enumerate() {
        let c = center_row(centers, label, batch.dim())?;
        for k in 0..batch.samples() {
            for m in 0..batch.modalities() {
                total += batch
                    .get(i, k, m)
                    .iter()
                    .zip(c)
                    .map(|(f, c)| (f - c) * (f - c))
                    .sum::<f64>();
            }
        }
    }
    Ok(total / (2.0 * n))
}

/// Returns dL/df and dL/dcenters.
pub fn center_gradient(batch: &BatchFeatures, centers: &CenterBank) -> Result<(BatchFeatures, CenterBank)> {
    let n = (batch.identities() * batch.samples() * batch.modalities()) as f64;
    if n == 0.0 {
        return Err(Error::shape("center loss over an empty batch"));
    }
    let d = batch.dim();
    let mut g_feat = batch.zeros_like();
    let mut g_cent = centers.zeros_like();
    for (i, &label) in batch.labels().iter().enumerate() {
        let c = center_row(centers, label, d)?;
        for k in 0..batch.samples() {
            for m in 0..batch.modalities() {
                let f = batch.get(i, k, m);
                let gf = g_feat.get_mut(i, k, m);
                let gc = &mut g_cent.data_mut()[label * d..(label + 1) * d];
                for j in 0..d {
                    let diff = (f[j] - c[j]) / n;
                    gf[j] = diff;
                    gc[j] -= diff;
                }
            }
        }
    }
    Ok((g_feat, g_cent))
}
