//! Finite-difference gradient suite run by `ccnet gradcheck`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Sample, Split};
use crate::error::{Error, Result};
use crate::losses::{cdc_gradient_weighted, cdc_modality_loss, cdc_sample_loss, BatchFeatures};
use crate::model::{
    encoder_backward, encoder_forward_cached, init_params, BranchParams, InputKind, ModelConfig, NormVariant,
};
use crate::normalization::alnu::{alnu_backward, alnu_forward, alnu_forward_cached, AlnuParams};
use crate::numkit::finite_diff::{finite_diff_grad, max_relative_error};
use crate::numkit::tape::Parameters;
use crate::numkit::{FeatureMap, Tensor};
use crate::training::{batch_objective, FeatureTap, LossVariant, LossWeights};

pub const GRADCHECK_HEADER: &str = "check,max_rel_error,tolerance,status";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    /// Random batches for the CdC checks.
    pub batches: usize,
    pub p: usize,
    pub k: usize,
    pub modalities: usize,
    pub dim: usize,
    pub alpha: f64,
    /// Random trials for the ALNU, encoder and composite checks.
    pub trials: usize,
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
    /// Test hook: scales the analytic sample-center gradient by (K−1)/K.
    pub inject_fault: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            batches: 100,
            p: 8,
            k: 4,
            modalities: 3,
            dim: 16,
            alpha: 0.6,
            trials: 3,
            step: 1e-6,
            tolerance: 1e-5,
            seed: 0,
            inject_fault: false,
        }
    }
}

impl GradcheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batches == 0 || self.trials == 0 {
            return Err(Error::config("gradcheck batches and trials must be positive"));
        }
        if self.p == 0 || self.k < 2 || self.modalities < 2 || self.dim == 0 {
            return Err(Error::config("gradcheck needs P >= 1, K >= 2, M >= 2 and dim >= 1"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) || !(self.tolerance > 0.0) {
            return Err(Error::config("gradcheck step and tolerance must be positive"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("gradcheck alpha must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

pub fn gradcheck_csv(results: &[CheckResult]) -> String {
    let mut out = String::from(GRADCHECK_HEADER);
    out.push('\n');
    for r in results {
        let status = if r.passed() { "pass" } else { "fail" };
        let _ = writeln!(out, "{},{:.3e},{:.0e},{}", r.name, r.max_rel_error, r.tolerance, status);
    }
    out
}

/// The failing check with the largest error relative to its tolerance.
pub fn worst_offender(results: &[CheckResult]) -> Option<&CheckResult> {
    results
        .iter()
        .filter(|r| !r.passed())
        .max_by(|a, b| (a.max_rel_error / a.tolerance).total_cmp(&(b.max_rel_error / b.tolerance)))
}

/// Runs every check; each row reports the worst error over its trials.
pub fn run_suite(cfg: &GradcheckConfig) -> Result<Vec<CheckResult>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut results = Vec::new();
    let mut push = |name: &str, err: f64| {
        results.push(CheckResult { name: name.to_string(), max_rel_error: err, tolerance: cfg.tolerance });
    };

    let (mut e_s, mut e_m, mut e_c) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..cfg.batches {
        let batch = random_batch(cfg, &mut rng)?;
        e_s = e_s.max(cdc_term_error(cfg, &batch, 1.0, 0.0)?);
        e_m = e_m.max(cdc_term_error(cfg, &batch, 0.0, 1.0)?);
        e_c = e_c.max(cdc_term_error(cfg, &batch, 1.0, cfg.alpha)?);
    }
    push("cdc_sample", e_s);
    push("cdc_modality", e_m);
    push("cdc", e_c);

    let (mut e_p, mut e_x) = (0.0_f64, 0.0_f64);
    for _ in 0..cfg.trials {
        let (p, x) = alnu_errors(cfg.step, &mut rng)?;
        e_p = e_p.max(p);
        e_x = e_x.max(x);
    }
    push("alnu_params", e_p);
    push("alnu_input", e_x);

    let encoders = [
        ("encoder_none", NormVariant::None, false),
        ("encoder_in", NormVariant::In, false),
        ("encoder_ln", NormVariant::Ln, false),
        ("encoder_alnu", NormVariant::Alnu, false),
        ("encoder_alnu_map", NormVariant::Alnu, true),
    ];
    for (name, norm, map) in encoders {
        let mut err = 0.0_f64;
        for _ in 0..cfg.trials {
            err = err.max(encoder_error(norm, map, cfg.step, &mut rng)?);
        }
        push(name, err);
    }

    for variant in LossVariant::ALL {
        let mut err = 0.0_f64;
        for _ in 0..cfg.trials {
            err = err.max(composite_error(variant, cfg.alpha, cfg.step, &mut rng)?);
        }
        push(&format!("composite_{}", variant.as_str()), err);
    }
    Ok(results)
}

fn random_batch(cfg: &GradcheckConfig, rng: &mut ChaCha8Rng) -> Result<BatchFeatures> {
    let n = cfg.p * cfg.k * cfg.modalities * cfg.dim;
    let data = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    BatchFeatures::from_flat(cfg.p, cfg.k, cfg.modalities, cfg.dim, data)
}

fn cdc_term_error(cfg: &GradcheckConfig, batch: &BatchFeatures, ws: f64, wm: f64) -> Result<f64> {
    let ws_analytic = if cfg.inject_fault { ws * (cfg.k as f64 - 1.0) / cfg.k as f64 } else { ws };
    let analytic = cdc_gradient_weighted(batch, ws_analytic, wm);
    let (p, k, m, d) = (batch.identities(), batch.samples(), batch.modalities(), batch.dim());
    let objective = |x: &[f64]| -> f64 {
        let b = BatchFeatures::from_flat(p, k, m, d, x.to_vec()).expect("batch shape is fixed");
        let s = if ws != 0.0 { ws * cdc_sample_loss(&b).expect("K >= 2") } else { 0.0 };
        let mm = if wm != 0.0 { wm * cdc_modality_loss(&b).expect("M >= 2") } else { 0.0 };
        s + mm
    };
    let numeric = finite_diff_grad(objective, batch.data(), cfg.step)?;
    Ok(max_relative_error(analytic.data(), &numeric))
}

fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, scale: f64) -> Result<FeatureMap> {
    FeatureMap::new(h, w, c, (0..h * w * c).map(|_| rng.random_range(-scale..scale)).collect())
}

fn alnu_errors(step: f64, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
    let mut params = AlnuParams::init_random(4, rng);
    // lift the hidden ReLU units off their kink
    for b in [&mut params.gamma_block, &mut params.beta_block] {
        b.conv1_b.fill(0.3);
        b.conv2_b.fill(0.3);
    }
    let f = random_map(rng, 3, 3, 4, 2.0)?;
    let up = random_map(rng, 3, 3, 4, 1.0)?;
    let loss = |q: &AlnuParams, x: &FeatureMap| -> f64 {
        let o = alnu_forward(q, x).expect("shapes are fixed");
        o.data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
    };
    let (_, cache) = alnu_forward_cached(&params, &f)?;
    let mut grads = params.clone();
    grads.zero_all();
    let g_in = alnu_backward(&params, &f, &cache, &up, &mut grads)?;
    let fd_p = finite_diff_grad(
        |x| {
            let mut q = params.clone();
            q.load_flat(x).expect("length is fixed");
            loss(&q, &f)
        },
        &params.flatten(),
        step,
    )?;
    let fd_x = finite_diff_grad(
        |x| loss(&params, &FeatureMap::new(3, 3, 4, x.to_vec()).expect("length is fixed")),
        f.data(),
        step,
    )?;
    Ok((max_relative_error(&grads.flatten(), &fd_p), max_relative_error(g_in.data(), &fd_x)))
}

fn tiny_config(norm: NormVariant, map: bool) -> ModelConfig {
    ModelConfig {
        input: if map { InputKind::Map { h: 3, w: 3, c: 2 } } else { InputKind::Vector { dim: 5 } },
        part1_hidden: 6,
        mid_shape: [2, 2, 3],
        map_channels: 3,
        part2_hidden: 6,
        feature_dim: 4,
        norm,
        ..ModelConfig::default()
    }
}

/// Moves parameters off ReLU kinks and gives ALNU blocks a live output stage.
fn perturb(params: &mut impl Parameters, rng: &mut ChaCha8Rng) {
    params.visit_mut("", &mut |name, t: &mut Tensor| {
        if name.ends_with("bias") {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(0.05..0.2));
        }
        if name.contains("conv3") {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
    });
}

fn encoder_error(norm: NormVariant, map: bool, step: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
    let cfg = tiny_config(norm, map);
    let mut params = init_params(rng.random(), &cfg, 3)?;
    let mut branch: BranchParams = params.branches.swap_remove(0);
    perturb(&mut branch, rng);
    branch.neck.running_mean.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.2..0.2));
    branch.neck.running_var.data_mut().iter_mut().for_each(|v| *v = rng.random_range(0.5..1.5));
    let x: Vec<f64> = (0..branch.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let up_f: Vec<f64> = (0..cfg.feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let up_n: Vec<f64> = (0..cfg.feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let up_l: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(u, v)| u * v).sum() };
    let loss = |q: &BranchParams, input: &[f64]| -> f64 {
        let c = encoder_forward_cached(q, input).expect("shapes are fixed");
        dot(&c.feature, &up_f) + dot(&c.neck_feature, &up_n) + dot(&c.logits, &up_l)
    };
    let cache = encoder_forward_cached(&branch, &x)?;
    let mut grads = branch.clone();
    grads.zero_all();
    let g_x = encoder_backward(&branch, &cache, &up_f, &up_n, &up_l, &mut grads)?;
    let fd_p = finite_diff_grad(
        |v| {
            let mut q = branch.clone();
            q.load_flat(v).expect("length is fixed");
            loss(&q, &x)
        },
        &branch.flatten(),
        step,
    )?;
    let fd_x = finite_diff_grad(|v| loss(&branch, v), &x, step)?;
    Ok(max_relative_error(&grads.flatten(), &fd_p).max(max_relative_error(&g_x, &fd_x)))
}

fn composite_error(variant: LossVariant, alpha: f64, step: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
    let cfg = tiny_config(NormVariant::Alnu, false);
    let mut params = init_params(rng.random(), &cfg, 2)?;
    perturb(&mut params, rng);
    for b in &mut params.branches {
        b.neck.running_mean.fill(0.1);
        b.neck.running_var.fill(0.8);
    }
    let samples: Vec<Sample> = (0..4)
        .map(|n| {
            let inputs = (0..cfg.modalities)
                .map(|_| Some((0..5).map(|_| rng.random_range(-1.0..1.0)).collect()))
                .collect();
            Sample::new((n / 2) as u64, n as i64, Split::Train, inputs)
        })
        .collect::<Result<_>>()?;
    let groups = vec![vec![&samples[0], &samples[1]], vec![&samples[2], &samples[3]]];
    let labels = [0, 1];
    let weights = LossWeights { variant, lambda: 0.3, alpha, tap: FeatureTap::PreNeck };
    let centers = Tensor::new(vec![2, cfg.feature_dim], (0..2 * cfg.feature_dim).map(|_| rng.random_range(-0.5..0.5)).collect())?;
    let out = batch_objective(&params, &groups, &labels, &weights, Some(&centers))?;
    let fd = finite_diff_grad(
        |x| {
            let mut q = params.clone();
            q.load_flat(x).expect("length is fixed");
            batch_objective(&q, &groups, &labels, &weights, Some(&centers))
                .map(|o| o.losses.total)
                .unwrap_or(f64::NAN)
        },
        &params.flatten(),
        step,
    )?;
    Ok(max_relative_error(&out.grads.flatten(), &fd))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> GradcheckConfig {
        GradcheckConfig { batches: 5, trials: 1, ..GradcheckConfig::default() }
    }

    #[test]
    fn default_suite_passes() {
        let results = run_suite(&quick()).unwrap();
        assert!(results.len() >= 16);
        for r in &results {
            assert!(r.passed(), "{} failed with {}", r.name, r.max_rel_error);
        }
        assert!(worst_offender(&results).is_none());
    }

    #[test]
    fn injected_fault_is_caught() {
        let results = run_suite(&GradcheckConfig { inject_fault: true, ..quick() }).unwrap();
        let worst = worst_offender(&results).unwrap();
        assert!(worst.name.starts_with("cdc"), "{}", worst.name);
        assert!(results.iter().any(|r| r.name == "cdc_modality" && r.passed()));
    }

    #[test]
    fn csv_layout() {
        let rows = [
            CheckResult { name: "a".into(), max_rel_error: 1e-9, tolerance: 1e-5 },
            CheckResult { name: "b".into(), max_rel_error: 0.5, tolerance: 1e-5 },
        ];
        let csv = gradcheck_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], GRADCHECK_HEADER);
        assert!(lines[1].ends_with(",pass"));
        assert!(lines[2].ends_with(",fail"));
        assert_eq!(worst_offender(&rows).unwrap().name, "b");
    }

    #[test]
    fn invalid_config_is_rejected() {
        assert!(matches!(run_suite(&GradcheckConfig { k: 1, ..quick() }), Err(Error::Config(_))));
    }
}
