//! Synthetic multi-modal identities with controllable sample and modality
//! discrepancies.
//!
//! For identity `i`, capture session (time label) `t`, sample `n` and
//! modality `m`:
//!
//! ```text
//! clean = base_i + offset_m + offset_{i,m} + session_{i,t} + jitter_{n,m}
//! x     = gain_{n,m} · clean + shift_{n,m}
//! ```
//!
//! `offset_*` scale with `modality_offset_scale`; `session`, `jitter`,
//! `log gain` and `shift` scale with `sample_noise_scale` (the last two
//! additionally by `gain_ratio`). `session` lies in a shared random
//! subspace of `nuisance_rank` directions so it cannot be averaged away per
//! dimension; rank 0 makes it isotropic. With probability `distortion_rate`
//! one modality of a sample is replaced by unrelated noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, Sample, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub id_count: usize,
    pub samples_per_id: usize,
    pub dim: usize,
    pub modalities: usize,
    pub modality_offset_scale: f64,
    pub sample_noise_scale: f64,
    pub distortion_rate: f64,
    /// Standard deviation of a corrupted modality's replacement noise.
    pub distortion_scale: f64,
    /// Relative strength of per-input gain/shift versus session noise.
    pub gain_ratio: f64,
    /// Number of shared environmental directions spanned by session noise;
    /// 0 makes session noise isotropic.
    pub nuisance_rank: usize,
    /// Sessions per identity; sample `n` is captured in session `n mod time_labels`.
    pub time_labels: usize,
    /// Leading fraction of identities used for training; the rest are held out.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            id_count: 20,
            samples_per_id: 8,
            dim: 32,
            modalities: 3,
            modality_offset_scale: 1.0,
            sample_noise_scale: 0.6,
            distortion_rate: 0.1,
            distortion_scale: 3.0,
            gain_ratio: 1.0,
            nuisance_rank: 4,
            time_labels: 3,
            train_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.id_count < 2 {
            return Err(Error::config("id_count must be at least 2"));
        }
        if self.samples_per_id == 0 || self.dim == 0 || self.modalities == 0 || self.time_labels == 0 {
            return Err(Error::config("samples_per_id, dim, modalities and time_labels must be positive"));
        }
        let scales = [
            self.modality_offset_scale,
            self.sample_noise_scale,
            self.distortion_scale,
            self.gain_ratio,
        ];
        if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::config("synthetic scales must be finite and nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.distortion_rate) {
            return Err(Error::config("distortion_rate must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(Error::config("train_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn train_id_count(&self) -> usize {
        ((self.id_count as f64 * self.train_fraction).round() as usize).min(self.id_count)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Deterministic in `cfg`. Identities `0..train_id_count` are train; for
/// every other identity the first sample of each session is a query and the
/// rest are gallery, unless no gallery entry from another session exists.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (d, mm) = (cfg.dim, cfg.modalities);
    let noise = cfg.sample_noise_scale;
    let global: Vec<Vec<f64>> = (0..mm).map(|_| gaussian(&mut rng, d, cfg.modality_offset_scale)).collect();
    let nuisance: Vec<Vec<f64>> = (0..cfg.nuisance_rank).map(|_| gaussian(&mut rng, d, 1.0)).collect();
    let train_ids = cfg.train_id_count();
    let mut samples = Vec::with_capacity(cfg.id_count * cfg.samples_per_id);
    for id in 0..cfg.id_count {
        let base = gaussian(&mut rng, d, 1.0);
        let own: Vec<Vec<f64>> = (0..mm).map(|_| gaussian(&mut rng, d, cfg.modality_offset_scale)).collect();
        let sessions: Vec<Vec<f64>> = (0..cfg.time_labels)
            .map(|_| {
                if nuisance.is_empty() {
                    return gaussian(&mut rng, d, noise);
                }
                let z = gaussian(&mut rng, nuisance.len(), noise);
                (0..d).map(|j| nuisance.iter().zip(&z).map(|(a, zr)| a[j] * zr).sum()).collect()
            })
            .collect();
        let times: Vec<usize> = (0..cfg.samples_per_id).map(|n| n % cfg.time_labels).collect();
        let splits = assign_splits(&times, id < train_ids);
        for (n, &t) in times.iter().enumerate() {
            let mut inputs = Vec::with_capacity(mm);
            for m in 0..mm {
                let jitter = gaussian(&mut rng, d, 0.3 * noise);
                let log_gain: f64 = rng.sample::<f64, _>(StandardNormal) * 0.5 * noise * cfg.gain_ratio;
                let shift: f64 = rng.sample::<f64, _>(StandardNormal) * noise * cfg.gain_ratio;
                let gain = log_gain.exp();
                let x: Vec<f64> = (0..d)
                    .map(|j| gain * (base[j] + global[m][j] + own[m][j] + sessions[t][j] + jitter[j]) + shift)
                    .collect();
                inputs.push(x);
            }
            if cfg.distortion_rate > 0.0 && rng.random::<f64>() < cfg.distortion_rate {
                let m = rng.random_range(0..mm);
                inputs[m] = gaussian(&mut rng, d, cfg.distortion_scale);
            }
            samples.push(Sample::new(
                id as u64,
                t as i64,
                splits[n],
                inputs.into_iter().map(Some).collect(),
            )?);
        }
    }
    DatasetManifest::new(samples)
}

fn assign_splits(times: &[usize], train: bool) -> Vec<Split> {
    if train {
        return vec![Split::Train; times.len()];
    }
    let mut splits: Vec<Split> = (0..times.len())
        .map(|n| if times[..n].contains(&times[n]) { Split::Gallery } else { Split::Query })
        .collect();
    for n in 0..times.len() {
        if splits[n] == Split::Query {
            let covered = (0..times.len()).any(|g| splits[g] == Split::Gallery && times[g] != times[n]);
            if !covered {
                splits[n] = Split::Gallery;
            }
        }
    }
    splits
}
