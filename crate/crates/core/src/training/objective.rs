//! The composite per-batch objective and its gradient with respect to every
//! model parameter.
//!
//! `L_total = L_ce + λ·L_aux`, where `L_ce` is the per-sample cross-entropy
//! summed over branch heads and averaged over the P·K samples, and `L_aux`
//! depends on the loss variant:
//!
//! | variant  | `L_aux`            |
//! |----------|--------------------|
//! | ce_only  | 0                  |
//! | cdc_s    | `L_S`              |
//! | cdc_m    | `α·L_M`            |
//! | hc       | `L_hc`             |
//! | cdc      | `L_S + α·L_M`      |
//! | center   | center loss        |
//!
//! Feature-level losses act on the pre-neck features `f`; cross-entropy acts
//! on the logits computed from the post-neck features.

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::losses::{
    cdc_gradient_weighted, cdc_modality_loss, cdc_sample_loss, center_gradient, center_loss, cross_entropy,
    hc_loss, BatchFeatures, CenterBank,
};
use crate::model::{encoder_backward, encoder_forward_cached, BranchCache, ModelParams};
use crate::numkit::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    CeOnly,
    Center,
    Hc,
    CdcS,
    CdcM,
    Cdc,
}

impl LossVariant {
    pub const ALL: [LossVariant; 6] = [
        LossVariant::CeOnly,
        LossVariant::Center,
        LossVariant::Hc,
        LossVariant::CdcS,
        LossVariant::CdcM,
        LossVariant::Cdc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossVariant::CeOnly => "ce_only",
            LossVariant::Center => "center",
            LossVariant::Hc => "hc",
            LossVariant::CdcS => "cdc_s",
            LossVariant::CdcM => "cdc_m",
            LossVariant::Cdc => "cdc",
        }
    }

    /// Whether the auxiliary term needs K ≥ 2.
    pub fn needs_samples(self) -> bool {
        matches!(self, LossVariant::CdcS | LossVariant::Cdc)
    }
}

impl std::str::FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().trim_start_matches('+').to_ascii_lowercase();
        LossVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == key)
            .ok_or_else(|| Error::config(format!("unknown loss variant '{s}'")))
    }
}

/// Which feature the feature-level losses (CdC, HC, center) act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureTap {
    #[default]
    PreNeck,
    PostNeck,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub variant: LossVariant,
    pub lambda: f64,
    pub alpha: f64,
    pub tap: FeatureTap,
}

impl LossWeights {
    /// Weights `(ws, wm)` on `L_S` and `L_M` inside `λ·L_aux`.
    fn cdc_weights(&self) -> (f64, f64) {
        let l = self.lambda;
        match self.variant {
            LossVariant::CdcS => (l, 0.0),
            LossVariant::CdcM => (0.0, l * self.alpha),
            LossVariant::Hc => (0.0, l),
            LossVariant::Cdc => (l, l * self.alpha),
            LossVariant::CeOnly | LossVariant::Center => (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchLosses {
    pub ce: f64,
    pub cdc_s: f64,
    pub cdc_m: f64,
    pub aux: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct ObjectiveOutput {
    pub losses: BatchLosses,
    /// Pre-neck features, `[P][K][M][d_f]`.
    pub features: BatchFeatures,
    pub grads: ModelParams,
    pub center_grads: Option<CenterBank>,
}

/// Evaluates the objective on `groups` (P groups of K complete samples) and
/// back-propagates it.
pub fn batch_objective(
    params: &ModelParams,
    groups: &[Vec<&Sample>],
    labels: &[usize],
    weights: &LossWeights,
    centers: Option<&CenterBank>,
) -> Result<ObjectiveOutput> {
    let p = groups.len();
    let k = groups.first().map_or(0, Vec::len);
    let mm = params.branches.len();
    let d = params.feature_dim();
    if p == 0 || k == 0 || groups.iter().any(|g| g.len() != k) || labels.len() != p {
        return Err(Error::shape("batch must be P groups of K samples with P labels"));
    }
    let n = (p * k) as f64;
    let mut caches: Vec<BranchCache> = Vec::with_capacity(p * k * mm);
    let mut pre_neck = BatchFeatures::zeros(p, k, mm, d).with_labels(labels.to_vec())?;
    let mut post_neck = pre_neck.clone();
    let mut ce = 0.0;
    let mut grad_logits = Vec::with_capacity(p * k);
    for (i, group) in groups.iter().enumerate() {
        for (kk, s) in group.iter().enumerate() {
            let mut logits = Vec::with_capacity(mm);
            for (m, branch) in params.branches.iter().enumerate() {
                let x = s.input(m).ok_or_else(|| {
                    Error::input(format!("training sample of identity {} lacks modality {m}", s.identity))
                })?;
                let c = encoder_forward_cached(branch, x)?;
                pre_neck.get_mut(i, kk, m).copy_from_slice(&c.feature);
                post_neck.get_mut(i, kk, m).copy_from_slice(&c.neck_feature);
                logits.push(c.logits.clone());
                caches.push(c);
            }
            let (l, g) = cross_entropy(&logits, labels[i])?;
            ce += l / n;
            grad_logits.push(g);
        }
    }

    let features = match weights.tap {
        FeatureTap::PreNeck => &pre_neck,
        FeatureTap::PostNeck => &post_neck,
    };
    let cdc_s = if k >= 2 { cdc_sample_loss(features)? } else { 0.0 };
    let cdc_m = if mm >= 2 { cdc_modality_loss(features)? } else { 0.0 };
    let aux = match weights.variant {
        LossVariant::CeOnly => 0.0,
        LossVariant::CdcS => cdc_s,
        LossVariant::CdcM => weights.alpha * cdc_m,
        LossVariant::Hc => hc_loss(features)?,
        LossVariant::Cdc => cdc_s + weights.alpha * cdc_m,
        LossVariant::Center => {
            let c = centers.ok_or_else(|| Error::config("center variant requires a center bank"))?;
            center_loss(features, c)?
        }
    };
    let total = ce + weights.lambda * aux;

    let mut center_grads = None;
    let grad_features = if weights.lambda == 0.0 {
        None
    } else if weights.variant == LossVariant::Center {
        let (mut gf, mut gc) = center_gradient(features, centers.expect("checked above"))?;
        gf.data_mut().iter_mut().for_each(|v| *v *= weights.lambda);
        gc.data_mut().iter_mut().for_each(|v| *v *= weights.lambda);
        center_grads = Some(gc);
        Some(gf)
    } else {
        let (ws, wm) = weights.cdc_weights();
        (ws != 0.0 || wm != 0.0).then(|| cdc_gradient_weighted(features, ws, wm))
    };

    let mut grads = params.clone();
    grads.zero_all();
    let zero_f = vec![0.0; d];
    let mut c = caches.iter();
    for i in 0..p {
        for kk in 0..k {
            let gl = &grad_logits[i * k + kk];
            for m in 0..mm {
                let cache = c.next().expect("one cache per feature");
                let gf = grad_features.as_ref().map_or(&zero_f[..], |g| g.get(i, kk, m));
                let glm: Vec<f64> = gl[m].iter().map(|v| v / n).collect();
                let (pre, post) = match weights.tap {
                    FeatureTap::PreNeck => (gf, &zero_f[..]),
                    FeatureTap::PostNeck => (&zero_f[..], gf),
                };
                encoder_backward(&params.branches[m], cache, pre, post, &glm, &mut grads.branches[m])?;
            }
        }
    }
    Ok(ObjectiveOutput {
        losses: BatchLosses {
            ce,
            cdc_s,
            cdc_m,
            aux,
            total,
        },
        features: pre_neck,
        grads,
        center_grads,
    })
}
