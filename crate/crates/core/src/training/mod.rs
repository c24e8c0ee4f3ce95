//! Seeded PK-batch optimization of the composite objective.

pub mod objective;
pub mod optimizer;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{pk_sample, DatasetManifest, Sample};
use crate::error::{Error, Result};
use crate::losses::{CenterBank, DEFAULT_ALPHA, DEFAULT_LAMBDA};
use crate::model::{encoder_forward_cached, init_params, ModelConfig, ModelParams};
use crate::numkit::Tensor;

pub use objective::{batch_objective, BatchLosses, FeatureTap, LossVariant, LossWeights, ObjectiveOutput};
pub use optimizer::{adam_step, AdamConfig, OptimizerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_initial: f64,
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub p: usize,
    pub k: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub seed: u64,
    pub loss_variant: LossVariant,
    pub feature_tap: FeatureTap,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 120,
            lr_initial: 3.5e-4,
            decay_epochs: vec![30, 55],
            decay_factor: 0.1,
            p: 8,
            k: 4,
            lambda: DEFAULT_LAMBDA,
            alpha: DEFAULT_ALPHA,
            seed: 0,
            loss_variant: LossVariant::Cdc,
            feature_tap: FeatureTap::PreNeck,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be positive"));
        }
        if !(self.lr_initial > 0.0 && self.lr_initial.is_finite()) {
            return Err(Error::config("lr_initial must be positive"));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("decay_epochs must be strictly increasing"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::config("decay_factor must lie in (0, 1]"));
        }
        if self.p == 0 || self.k == 0 {
            return Err(Error::config("P and K must be positive"));
        }
        if self.k < 2 && self.loss_variant.needs_samples() && self.lambda != 0.0 {
            return Err(Error::config("the sample-center term needs K >= 2"));
        }
        for (name, v) in [("lambda", self.lambda), ("alpha", self.alpha)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be finite and nonnegative")));
            }
        }
        let a = self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.epsilon > 0.0) {
            return Err(Error::config("adam betas must lie in [0, 1) and epsilon be positive"));
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            variant: self.loss_variant,
            lambda: self.lambda,
            alpha: self.alpha,
            tap: self.feature_tap,
        }
    }
}

/// Piecewise-constant step decay: one factor per decay epoch already reached.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    let passed = cfg.decay_epochs.iter().filter(|&&e| epoch >= e).count();
    cfg.lr_initial * cfg.decay_factor.powi(passed as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub ce: f64,
    pub cdc_s: f64,
    pub cdc_m: f64,
    pub total: f64,
    pub intra_sample_dist: f64,
    pub intra_modality_dist: f64,
}

pub const LOG_HEADER: &str = "epoch,lr,L_ce,L_cdc_s,L_cdc_m,L_total,intra_sample_dist,intra_modality_dist";

pub fn log_to_csv(log: &[EpochRecord]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in log {
        out.push_str(&format!(
            "{},{:e},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}\n",
            r.epoch, r.lr, r.ce, r.cdc_s, r.cdc_m, r.total, r.intra_sample_dist, r.intra_modality_dist
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochRecord>,
    pub centers: Option<CenterBank>,
}

/// Mean distance of sample centers and of modality centers to their
/// identity's overall center, averaged over train identities.
pub fn intra_class_distances(params: &ModelParams, manifest: &DatasetManifest) -> Result<(f64, f64)> {
    let groups = manifest.train_groups();
    let mm = params.branches.len();
    let d = params.feature_dim();
    let (mut ds, mut dm) = (0.0, 0.0);
    for members in groups.values() {
        let mut feats: Vec<Vec<Vec<f64>>> = Vec::with_capacity(members.len());
        for &i in members {
            let s = &manifest.samples[i];
            let mut per = Vec::with_capacity(mm);
            for (m, b) in params.branches.iter().enumerate() {
                let x = s.input(m).ok_or_else(|| Error::input("training sample lacks a modality"))?;
                per.push(encoder_forward_cached(b, x)?.feature);
            }
            feats.push(per);
        }
        let nk = feats.len() as f64;
        let mut global = vec![0.0; d];
        for per in &feats {
            for f in per {
                for j in 0..d {
                    global[j] += f[j] / (nk * mm as f64);
                }
            }
        }
        let dist = |c: &[f64]| c.iter().zip(&global).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let mut s_sum = 0.0;
        for per in &feats {
            let c: Vec<f64> = (0..d).map(|j| per.iter().map(|f| f[j]).sum::<f64>() / mm as f64).collect();
            s_sum += dist(&c);
        }
        let mut m_sum = 0.0;
        for m in 0..mm {
            let c: Vec<f64> = (0..d).map(|j| feats.iter().map(|per| per[m][j]).sum::<f64>() / nk).collect();
            m_sum += dist(&c);
        }
        ds += s_sum / nk;
        dm += m_sum / mm as f64;
    }
    let g = groups.len().max(1) as f64;
    Ok((ds / g, dm / g))
}

/// Trains `params` in place on the train split of `manifest`.
///
/// Each epoch draws `ceil(train_samples / (P·K))` PK batches from a stream
/// seeded by `cfg.seed`, applies one Adam step per batch and logs the batch
/// means of the losses plus the intra-class distances measured on the whole
/// train split after the epoch. Neck statistics follow each batch's
/// features by moving average.
pub fn fit(manifest: &DatasetManifest, mut params: ModelParams, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train = manifest.train_groups();
    let train_samples: usize = train.values().map(Vec::len).sum();
    if train_samples == 0 {
        return Err(Error::input("train split is empty"));
    }
    if params.class_count != train.len() {
        return Err(Error::config(format!(
            "model has {} classes but the train split has {} identities",
            params.class_count,
            train.len()
        )));
    }
    let weights = cfg.weights();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::new(&params, cfg.adam);
    let mut centers = (cfg.loss_variant == LossVariant::Center)
        .then(|| Tensor::zeros(&[params.class_count, params.feature_dim()]));
    let mut center_opt = centers.as_ref().map(|c| OptimizerState::new(c, cfg.adam));
    let batches = train_samples.div_ceil(cfg.p * cfg.k);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg);
        let mut sum = BatchLosses::default();
        for _ in 0..batches {
            step += 1;
            let batch = pk_sample(manifest, cfg.p, cfg.k, &mut rng)?;
            let groups: Vec<Vec<&Sample>> = batch
                .groups
                .iter()
                .map(|g| g.iter().map(|&i| &manifest.samples[i]).collect())
                .collect();
            let out = batch_objective(&params, &groups, &batch.labels, &weights, centers.as_ref())?;
            let l = out.losses;
            if ![l.ce, l.cdc_s, l.cdc_m, l.total].iter().all(|v| v.is_finite()) {
                return Err(Error::Training {
                    step,
                    msg: format!(
                        "non-finite loss in epoch {epoch}: L_ce={} L_cdc_s={} L_cdc_m={} L_total={}",
                        l.ce, l.cdc_s, l.cdc_m, l.total
                    ),
                });
            }
            adam_step(&mut opt, &mut params, &out.grads, lr).map_err(|e| with_step(e, step))?;
            if let (Some(c), Some(o), Some(g)) = (centers.as_mut(), center_opt.as_mut(), out.center_grads.as_ref()) {
                adam_step(o, c, g, lr).map_err(|e| with_step(e, step))?;
            }
            update_necks(&mut params, &out);
            sum.ce += l.ce;
            sum.cdc_s += l.cdc_s;
            sum.cdc_m += l.cdc_m;
            sum.total += l.total;
        }
        let nb = batches as f64;
        let (ds, dm) = intra_class_distances(&params, manifest)?;
        log.push(EpochRecord {
            epoch,
            lr,
            ce: sum.ce / nb,
            cdc_s: sum.cdc_s / nb,
            cdc_m: sum.cdc_m / nb,
            total: sum.total / nb,
            intra_sample_dist: ds,
            intra_modality_dist: dm,
        });
    }
    Ok(TrainOutcome { params, log, centers })
}

fn with_step(e: Error, step: u64) -> Error {
    match e {
        Error::Training { msg, .. } => Error::Training { step, msg },
        other => other,
    }
}

fn update_necks(params: &mut ModelParams, out: &ObjectiveOutput) {
    let f = &out.features;
    for (m, b) in params.branches.iter_mut().enumerate() {
        let rows: Vec<&[f64]> = (0..f.identities())
            .flat_map(|i| (0..f.samples()).map(move |k| (i, k)))
            .map(|(i, k)| f.get(i, k, m))
            .collect();
        b.neck.update_statistics(&rows);
    }
}

/// Initializes a model from `cfg.seed` sized for the manifest's train split and trains it.
pub fn train_from_scratch(manifest: &DatasetManifest, model: &ModelConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let classes = manifest.train_identities().len();
    if classes == 0 {
        return Err(Error::input("train split is empty"));
    }
    let params = init_params(cfg.seed, model, classes)?;
    fit(manifest, params, cfg)
}
