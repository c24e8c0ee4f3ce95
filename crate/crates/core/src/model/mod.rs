//! Multi-branch encoder: one independent branch per modality.
//!
//! Each branch computes `f = Part2(Norm(Part1(x)))`, where the mid-stack
//! normalization is ALNU (or a baseline / nothing for ablations), then a
//! neck feature `neck(f)` used for retrieval and logits `head(neck(f))` used
//! for cross-entropy. A sample is represented by concatenating the neck
//! features of all branches in modality order.

pub mod checkpoint;
pub mod layers;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalization::{alnu_backward, alnu_forward_cached, AlnuCache, AlnuParams, BaselineNorm, NormMode};
use crate::normalization::baseline::GroupNormCache;
use crate::numkit::conv::{conv2d, conv2d_backward_into};
use crate::numkit::tape::join;
use crate::numkit::activation::{relu_backward_in_place, relu_in_place};
use crate::numkit::{FeatureMap, FeatureVec, Parameters, Tensor};
pub use layers::{Linear, Neck};

pub const MODALITY_NAMES: [&str; 3] = ["rgb", "nir", "tir"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormVariant {
    None,
    In,
    Ln,
    Alnu,
}

impl NormVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            NormVariant::None => "none",
            NormVariant::In => "in",
            NormVariant::Ln => "ln",
            NormVariant::Alnu => "alnu",
        }
    }
}

impl std::str::FromStr for NormVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(NormVariant::None),
            "in" => Ok(NormVariant::In),
            "ln" => Ok(NormVariant::Ln),
            "alnu" => Ok(NormVariant::Alnu),
            other => Err(Error::config(format!("unknown normalization variant '{other}'"))),
        }
    }
}

/// Shape of one modality input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputKind {
    Vector { dim: usize },
    Map { h: usize, w: usize, c: usize },
}

impl InputKind {
    pub fn len(&self) -> usize {
        match *self {
            InputKind::Vector { dim } => dim,
            InputKind::Map { h, w, c } => h * w * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input: InputKind,
    pub modalities: usize,
    /// Hidden width of the first affine layer on the vector path.
    pub part1_hidden: usize,
    /// Shape of the mid-stack map on the vector path (reshaped affine output).
    pub mid_shape: [usize; 3],
    /// Output channels of the first conv on the map path.
    pub map_channels: usize,
    pub part2_hidden: usize,
    pub feature_dim: usize,
    pub norm: NormVariant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input: InputKind::Vector { dim: 32 },
            modalities: 3,
            part1_hidden: 64,
            mid_shape: [4, 4, 4],
            map_channels: 8,
            part2_hidden: 64,
            feature_dim: 32,
            norm: NormVariant::Alnu,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input.is_empty() {
            return Err(Error::config("model input dimension must be positive"));
        }
        if self.modalities == 0 || self.feature_dim == 0 || self.part2_hidden == 0 {
            return Err(Error::config("model widths must be positive"));
        }
        match self.input {
            InputKind::Vector { .. } => {
                if self.part1_hidden == 0 || self.mid_shape.contains(&0) {
                    return Err(Error::config("vector path widths must be positive"));
                }
            }
            InputKind::Map { h, w, c } => {
                if h < 3 || w < 3 || c == 0 || self.map_channels == 0 {
                    return Err(Error::config("map inputs must be at least 3x3 with channels"));
                }
            }
        }
        Ok(())
    }

    /// Shape of the map entering the mid-stack normalization.
    pub fn mid_map_shape(&self) -> (usize, usize, usize) {
        match self.input {
            InputKind::Vector { .. } => (self.mid_shape[0], self.mid_shape[1], self.mid_shape[2]),
            InputKind::Map { h, w, .. } => (h, w, self.map_channels),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Part1 {
    /// Two affine+ReLU layers, output reshaped to the mid map.
    Mlp { fc1: Linear, fc2: Linear, shape: (usize, usize, usize) },
    /// One 3×3 conv (padding 1) + ReLU.
    Conv { weight: Tensor, bias: Tensor, shape: (usize, usize, usize) },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MidNorm {
    None,
    Baseline(BaselineNorm),
    Alnu(AlnuParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchParams {
    pub part1: Part1,
    pub norm: MidNorm,
    pub fc3: Linear,
    pub fc4: Linear,
    pub neck: Neck,
    pub head: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub branches: Vec<BranchParams>,
    pub class_count: usize,
}

/// Activations retained by [`encoder_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct BranchCache {
    input: Vec<f64>,
    h1: Vec<f64>,
    mid_in: FeatureMap,
    norm_cache: NormCache,
    mid_out: Vec<f64>,
    h3: Vec<f64>,
    pub feature: Vec<f64>,
    pub neck_feature: Vec<f64>,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone)]
enum NormCache {
    None,
    Baseline(GroupNormCache),
    Alnu(Box<AlnuCache>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub feature: FeatureVec,
    pub neck_feature: FeatureVec,
    pub logits: Vec<f64>,
}

impl Parameters for Part1 {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        match self {
            Part1::Mlp { fc1, fc2, .. } => {
                fc1.visit(&join(prefix, "fc1"), f);
                fc2.visit(&join(prefix, "fc2"), f);
            }
            Part1::Conv { weight, bias, .. } => {
                f(&join(prefix, "conv.weight"), weight);
                f(&join(prefix, "conv.bias"), bias);
            }
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        match self {
            Part1::Mlp { fc1, fc2, .. } => {
                fc1.visit_mut(&join(prefix, "fc1"), f);
                fc2.visit_mut(&join(prefix, "fc2"), f);
            }
            Part1::Conv { weight, bias, .. } => {
                f(&join(prefix, "conv.weight"), weight);
                f(&join(prefix, "conv.bias"), bias);
            }
        }
    }
}

impl Parameters for MidNorm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        match self {
            MidNorm::None => {}
            MidNorm::Baseline(n) => n.visit(prefix, f),
            MidNorm::Alnu(a) => a.visit(prefix, f),
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        match self {
            MidNorm::None => {}
            MidNorm::Baseline(n) => n.visit_mut(prefix, f),
            MidNorm::Alnu(a) => a.visit_mut(prefix, f),
        }
    }
}

impl Parameters for BranchParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.part1.visit(&join(prefix, "part1"), f);
        self.norm.visit(&join(prefix, "norm"), f);
        self.fc3.visit(&join(prefix, "part2.fc1"), f);
        self.fc4.visit(&join(prefix, "part2.fc2"), f);
        self.neck.visit(&join(prefix, "neck"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.part1.visit_mut(&join(prefix, "part1"), f);
        self.norm.visit_mut(&join(prefix, "norm"), f);
        self.fc3.visit_mut(&join(prefix, "part2.fc1"), f);
        self.fc4.visit_mut(&join(prefix, "part2.fc2"), f);
        self.neck.visit_mut(&join(prefix, "neck"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

impl Parameters for ModelParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        for (m, b) in self.branches.iter().enumerate() {
            b.visit(&join(prefix, &format!("branch{m}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (m, b) in self.branches.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("branch{m}")), f);
        }
    }
}

impl BranchParams {
    pub fn init(config: &ModelConfig, class_count: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (mh, mw, mc) = config.mid_map_shape();
        let mid_len = mh * mw * mc;
        let part1 = match config.input {
            InputKind::Vector { dim } => Part1::Mlp {
                fc1: Linear::init(dim, config.part1_hidden, true, rng),
                fc2: Linear::init(config.part1_hidden, mid_len, true, rng),
                shape: (mh, mw, mc),
            },
            InputKind::Map { h, w, c } => Part1::Conv {
                weight: Tensor::uniform_fan_in(&[config.map_channels, 3, 3, c], 9 * c, rng),
                bias: Tensor::zeros(&[config.map_channels]),
                shape: (h, w, c),
            },
        };
        let norm = match config.norm {
            NormVariant::None => MidNorm::None,
            NormVariant::In => MidNorm::Baseline(BaselineNorm::new(NormMode::Instance, mc)?),
            NormVariant::Ln => MidNorm::Baseline(BaselineNorm::new(NormMode::Layer, mc)?),
            NormVariant::Alnu => MidNorm::Alnu(AlnuParams::init(mc, rng)),
        };
        Ok(BranchParams {
            part1,
            norm,
            fc3: Linear::init(mid_len, config.part2_hidden, true, rng),
            fc4: Linear::init(config.part2_hidden, config.feature_dim, true, rng),
            neck: Neck::new(config.feature_dim),
            head: Linear::init(config.feature_dim, class_count, false, rng),
        })
    }

    pub fn input_len(&self) -> usize {
        match &self.part1 {
            Part1::Mlp { fc1, .. } => fc1.inputs(),
            Part1::Conv { shape, .. } => shape.0 * shape.1 * shape.2,
        }
    }
}

/// Deterministic parameters for `config.modalities` independent branches.
///
/// Weights are uniform with fan-in scaling `±√(6/fan_in)`, biases start at
/// zero, neck scales at one, and every ALNU block's final stage at zero so
/// γ = β = 0.5 initially. Branches draw from one seeded stream in order, so
/// no two branches share weights.
pub fn init_params(seed: u64, config: &ModelConfig, class_count: usize) -> Result<ModelParams> {
    config.validate()?;
    if class_count == 0 {
        return Err(Error::config("class count must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let branches = (0..config.modalities)
        .map(|_| BranchParams::init(config, class_count, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelParams {
        config: config.clone(),
        branches,
        class_count,
    })
}

/// Runs one branch, keeping what the backward pass needs.
pub fn encoder_forward_cached(params: &BranchParams, x: &[f64]) -> Result<BranchCache> {
    if x.len() != params.input_len() {
        return Err(Error::shape(format!(
            "branch expects input length {}, got {}",
            params.input_len(),
            x.len()
        )));
    }
    let (h1, mid_in) = match &params.part1 {
        Part1::Mlp { fc1, fc2, shape } => {
            let h1 = fc1.forward_relu(x)?;
            let h2 = fc2.forward_relu(&h1)?;
            (h1, FeatureMap::new(shape.0, shape.1, shape.2, h2)?)
        }
        Part1::Conv { weight, bias, shape } => {
            let xm = FeatureMap::new(shape.0, shape.1, shape.2, x.to_vec())?;
            let mut y = conv2d(&xm, weight, Some(bias.data()), 1, 1)?;
            relu_in_place(y.data_mut());
            (Vec::new(), y)
        }
    };
    let (mid_out, norm_cache) = match &params.norm {
        MidNorm::None => (mid_in.data().to_vec(), NormCache::None),
        MidNorm::Baseline(n) => {
            let (o, c) = n.forward_cached(&mid_in)?;
            (o.into_data(), NormCache::Baseline(c))
        }
        MidNorm::Alnu(a) => {
            let (o, c) = alnu_forward_cached(a, &mid_in)?;
            (o.into_data(), NormCache::Alnu(Box::new(c)))
        }
    };
    let h3 = params.fc3.forward_relu(&mid_out)?;
    let feature = params.fc4.forward_relu(&h3)?;
    let neck_feature = params.neck.forward(&feature)?;
    let logits = params.head.forward(&neck_feature)?;
    Ok(BranchCache {
        input: x.to_vec(),
        h1,
        mid_in,
        norm_cache,
        mid_out,
        h3,
        feature,
        neck_feature,
        logits,
    })
}

pub fn encoder_forward(params: &BranchParams, x: &[f64]) -> Result<EncoderOutput> {
    let c = encoder_forward_cached(params, x)?;
    Ok(EncoderOutput {
        feature: FeatureVec::new(c.feature)?,
        neck_feature: FeatureVec::new(c.neck_feature)?,
        logits: c.logits,
    })
}

/// Backward through one branch.
///
/// `grad_feature` and `grad_neck_feature` are upstream gradients on the
/// pre-neck and post-neck features, `grad_logits` the classifier gradient;
/// any may be all zeros. Parameter gradients accumulate into `grads`; dL/dx
/// is returned.
pub fn encoder_backward(
    params: &BranchParams,
    cache: &BranchCache,
    grad_feature: &[f64],
    grad_neck_feature: &[f64],
    grad_logits: &[f64],
    grads: &mut BranchParams,
) -> Result<Vec<f64>> {
    let mut g_neck = params.head.backward(&cache.neck_feature, grad_logits, &mut grads.head)?;
    if grad_neck_feature.len() != g_neck.len() {
        return Err(Error::shape("neck feature gradient length mismatch"));
    }
    for (a, b) in g_neck.iter_mut().zip(grad_neck_feature) {
        *a += b;
    }
    let mut g_f = params.neck.backward(&cache.feature, &g_neck, &mut grads.neck);
    if grad_feature.len() != g_f.len() {
        return Err(Error::shape("feature gradient length mismatch"));
    }
    for (a, b) in g_f.iter_mut().zip(grad_feature) {
        *a += b;
    }
    let g_h3 = params.fc4.backward_relu(&cache.h3, &cache.feature, &g_f, &mut grads.fc4)?;
    let g_mid_out = params.fc3.backward_relu(&cache.mid_out, &cache.h3, &g_h3, &mut grads.fc3)?;
    let (mh, mw, mc) = cache.mid_in.shape();
    let g_mid_out_map = FeatureMap::new(mh, mw, mc, g_mid_out)?;
    let mut g_mid_in = match (&params.norm, &cache.norm_cache, &mut grads.norm) {
        (MidNorm::None, NormCache::None, MidNorm::None) => g_mid_out_map,
        (MidNorm::Baseline(n), NormCache::Baseline(c), MidNorm::Baseline(g)) => {
            n.backward(c, &g_mid_out_map, g)?
        }
        (MidNorm::Alnu(a), NormCache::Alnu(c), MidNorm::Alnu(g)) => {
            alnu_backward(a, &cache.mid_in, c, &g_mid_out_map, g)?
        }
        _ => return Err(Error::shape("normalization cache does not match parameters")),
    };
    match (&params.part1, &mut grads.part1) {
        (Part1::Mlp { fc1, fc2, .. }, Part1::Mlp { fc1: g1, fc2: g2, .. }) => {
            let g_h1 = fc2.backward_relu(&cache.h1, cache.mid_in.data(), g_mid_in.data(), g2)?;
            fc1.backward_relu(&cache.input, &cache.h1, &g_h1, g1)
        }
        (Part1::Conv { weight, shape, .. }, Part1::Conv { weight: gw, bias: gb, .. }) => {
            relu_backward_in_place(cache.mid_in.data(), g_mid_in.data_mut());
            let xm = FeatureMap::new(shape.0, shape.1, shape.2, cache.input.clone())?;
            let mut gx = FeatureMap::zeros(shape.0, shape.1, shape.2);
            conv2d_backward_into(&xm, weight, 1, 1, &g_mid_in, &mut gx, gw.data_mut(), Some(gb.data_mut()))?;
            Ok(gx.into_data())
        }
        _ => Err(Error::shape("gradient buffers do not match parameters")),
    }
}

/// Per-modality features of one sample plus the concatenated representation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub features: Vec<FeatureVec>,
    pub neck_features: Vec<FeatureVec>,
    pub logits: Vec<Vec<f64>>,
    pub representation: FeatureVec,
}

/// Runs every branch on its modality. All modalities must be present.
pub fn sample_forward(params: &ModelParams, inputs: &[Option<Vec<f64>>]) -> Result<SampleOutput> {
    if inputs.len() != params.branches.len() {
        return Err(Error::input(format!(
            "sample has {} modality slots, model has {} branches",
            inputs.len(),
            params.branches.len()
        )));
    }
    let mut out = SampleOutput {
        features: Vec::new(),
        neck_features: Vec::new(),
        logits: Vec::new(),
        representation: FeatureVec::zeros(1),
    };
    let mut concat = Vec::new();
    for (m, (branch, x)) in params.branches.iter().zip(inputs).enumerate() {
        let x = x.as_ref().ok_or_else(|| {
            Error::input(format!(
                "modality {} missing; training requires every modality",
                MODALITY_NAMES.get(m).copied().unwrap_or("?")
            ))
        })?;
        let e = encoder_forward(branch, x)?;
        concat.extend_from_slice(&e.neck_feature);
        out.features.push(e.feature);
        out.neck_features.push(e.neck_feature);
        out.logits.push(e.logits);
    }
    out.representation = FeatureVec::new(concat)?;
    Ok(out)
}

/// Neck features for each present modality; absent modalities yield `None`.
pub fn modality_embeddings(params: &ModelParams, inputs: &[Option<Vec<f64>>]) -> Result<Vec<Option<Vec<f64>>>> {
    if inputs.len() != params.branches.len() {
        return Err(Error::input("modality slot count does not match model"));
    }
    params
        .branches
        .iter()
        .zip(inputs)
        .map(|(b, x)| match x {
            Some(x) => Ok(Some(encoder_forward_cached(b, x)?.neck_feature)),
            None => Ok(None),
        })
        .collect()
}

impl ModelParams {
    pub fn visit_buffers(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        for (m, b) in self.branches.iter().enumerate() {
            b.neck.visit_buffers(&format!("branch{m}.neck"), f);
        }
    }

    pub fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (m, b) in self.branches.iter_mut().enumerate() {
            b.neck.visit_buffers_mut(&format!("branch{m}.neck"), f);
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(norm: NormVariant) -> ModelConfig {
        ModelConfig {
            input: InputKind::Vector { dim: 6 },
            part1_hidden: 8,
            mid_shape: [2, 2, 4],
            part2_hidden: 8,
            feature_dim: 5,
            norm,
            ..ModelConfig::default()
        }
    }

    fn inputs(seed: f64) -> Vec<Option<Vec<f64>>> {
        (0..3)
            .map(|m| Some((0..6).map(|j| ((j + 7 * m) as f64 * 0.9 + seed).sin()).collect()))
            .collect()
    }

    #[test]
    fn zero_weights_give_zero_feature() {
        let mut p = init_params(1, &tiny_config(NormVariant::None), 4).unwrap();
        p.zero_all();
        let out = sample_forward(&p, &inputs(0.0)).unwrap();
        for f in &out.features {
            assert!(f.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn deterministic_and_shaped() {
        let cfg = tiny_config(NormVariant::Alnu);
        let a = init_params(7, &cfg, 4).unwrap();
        let b = init_params(7, &cfg, 4).unwrap();
        assert_eq!(a, b);
        let c = init_params(8, &cfg, 4).unwrap();
        assert_ne!(a.flatten(), c.flatten());
        let x = inputs(0.3);
        let o1 = sample_forward(&a, &x).unwrap();
        let o2 = sample_forward(&a, &x).unwrap();
        assert_eq!(o1, o2);
        assert_eq!(o1.features[0].dim(), 5);
        assert_eq!(o1.representation.dim(), 15);
        assert_eq!(o1.logits[2].len(), 4);
    }

    #[test]
    fn fresh_alnu_is_half_normalized_plus_half() {
        let cfg = tiny_config(NormVariant::Alnu);
        let p = init_params(3, &cfg, 4).unwrap();
        let c = encoder_forward_cached(&p.branches[0], inputs(0.1)[0].as_ref().unwrap()).unwrap();
        match &c.norm_cache {
            NormCache::Alnu(a) => {
                assert_eq!(a.gamma, 0.5);
                assert_eq!(a.beta, 0.5);
            }
            _ => panic!("expected ALNU cache"),
        }
    }

    #[test]
    fn identical_branches_and_inputs_give_identical_blocks() {
        let mut p = init_params(5, &tiny_config(NormVariant::Ln), 3).unwrap();
        let b0 = p.branches[0].clone();
        p.branches[1] = b0.clone();
        p.branches[2] = b0;
        let x: Vec<f64> = (0..6).map(|j| j as f64 * 0.1 - 0.2).collect();
        let out = sample_forward(&p, &[Some(x.clone()), Some(x.clone()), Some(x)]).unwrap();
        assert_eq!(out.neck_features[0], out.neck_features[1]);
        assert_eq!(out.neck_features[1], out.neck_features[2]);
    }

    #[test]
    fn permuting_inputs_permutes_blocks_with_shared_weights() {
        let mut p = init_params(5, &tiny_config(NormVariant::None), 3).unwrap();
        let b0 = p.branches[0].clone();
        p.branches = vec![b0.clone(), b0.clone(), b0];
        let x = inputs(0.7);
        let a = sample_forward(&p, &x).unwrap();
        let swapped = vec![x[2].clone(), x[0].clone(), x[1].clone()];
        let b = sample_forward(&p, &swapped).unwrap();
        assert_eq!(b.neck_features[0], a.neck_features[2]);
        assert_eq!(b.neck_features[1], a.neck_features[0]);
        assert_eq!(b.neck_features[2], a.neck_features[1]);
    }

    #[test]
    fn missing_modality_is_input_error() {
        let p = init_params(1, &tiny_config(NormVariant::None), 2).unwrap();
        let mut x = inputs(0.0);
        x[1] = None;
        assert!(matches!(sample_forward(&p, &x), Err(Error::Input(_))));
    }

    #[test]
    fn branches_do_not_share_parameters() {
        let mut p = init_params(2, &tiny_config(NormVariant::Alnu), 3).unwrap();
        let x = inputs(0.2);
        let before = sample_forward(&p, &x).unwrap();
        p.branches[0].fc4.weight.data_mut().iter_mut().for_each(|v| *v *= -1.5);
        let after = sample_forward(&p, &x).unwrap();
        assert_ne!(before.features[0], after.features[0]);
        assert_eq!(before.features[1], after.features[1]);
        assert_eq!(before.features[2], after.features[2]);
    }

    #[test]
    fn map_path_shapes() {
        let cfg = ModelConfig {
            input: InputKind::Map { h: 8, w: 8, c: 2 },
            map_channels: 4,
            feature_dim: 6,
            part2_hidden: 10,
            ..ModelConfig::default()
        };
        let p = init_params(9, &cfg, 3).unwrap();
        let x: Vec<f64> = (0..128).map(|i| (i as f64 * 0.37).cos()).collect();
        let out = sample_forward(&p, &[Some(x.clone()), Some(x.clone()), Some(x)]).unwrap();
        assert_eq!(out.representation.dim(), 18);
    }
}
