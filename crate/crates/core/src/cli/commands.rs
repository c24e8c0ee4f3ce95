//! Subcommand bodies. Each takes a validated, seed-resolved config whose
//! echo has already been written.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::gradcheck::{gradcheck_csv, run_suite, worst_offender};
use crate::data::embeddings::{read_embeddings, write_embeddings};
use crate::data::manifest::load_manifest;
use crate::data::synth::generate_synthetic;
use crate::data::DatasetManifest;
use crate::error::{Error, Result};
use crate::evaluation::{
    emit_report, masked_center_eval, missing_experiment, modality_subset_eval, EmbeddingSet, MetricRow, Subset,
};
use crate::model::checkpoint::{load_checkpoint, save_checkpoint};
use crate::model::{modality_embeddings, ModelParams};
use crate::training::{log_to_csv, train_from_scratch, TrainConfig};

pub const GRADCHECK_CSV: &str = "gradcheck.csv";
pub const CHECKPOINT_FILE: &str = "model.ccnl";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.ccnf";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MISSING_FILE: &str = "missing.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_HEADER: &str = "param,lambda,alpha,mAP,rank1,rank5,rank10";

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads the manifest or generates the synthetic set, then checks it fits the model.
pub fn load_data(cfg: &RunConfig) -> Result<DatasetManifest> {
    let manifest = match &cfg.data.manifest {
        Some(path) => load_manifest(path)?,
        None => generate_synthetic(&cfg.data.synth)?,
    };
    if manifest.modalities() != cfg.model.modalities {
        return Err(Error::Config(format!(
            "data has {} modalities, model expects {}",
            manifest.modalities(),
            cfg.model.modalities
        )));
    }
    if manifest.input_dim() != cfg.model.input.len() {
        return Err(Error::Config(format!(
            "data inputs have {} values, model expects {}",
            manifest.input_dim(),
            cfg.model.input.len()
        )));
    }
    Ok(manifest)
}

pub fn cmd_gradcheck(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let results = run_suite(&cfg.gradcheck)?;
    let path = cfg.output_dir.join(GRADCHECK_CSV);
    write_file(&path, &gradcheck_csv(&results))?;
    if let Some(w) = worst_offender(&results) {
        let failed = results.iter().filter(|r| !r.passed()).count();
        return Err(Error::Check(format!(
            "{failed} gradient check(s) failed; worst offender {} with relative error {:.3e} (tolerance {:.0e})",
            w.name, w.max_rel_error, w.tolerance
        )));
    }
    Ok(vec![path])
}

/// Row `i` concatenates sample `i`'s modality embeddings; absent ones are zeros.
pub fn embedding_rows(params: &ModelParams, manifest: &DatasetManifest) -> Result<Vec<Vec<f64>>> {
    let d = params.feature_dim();
    manifest
        .samples
        .iter()
        .map(|s| {
            let embs = modality_embeddings(params, s.inputs())?;
            Ok(embs.into_iter().flat_map(|e| e.unwrap_or_else(|| vec![0.0; d])).collect())
        })
        .collect()
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let manifest = load_data(cfg)?;
    let outcome = train_from_scratch(&manifest, &cfg.model, &cfg.train)?;
    let ckpt = cfg.output_dir.join(CHECKPOINT_FILE);
    save_checkpoint(&outcome.params, &ckpt)?;
    let log = cfg.output_dir.join(TRAIN_LOG);
    write_file(&log, &log_to_csv(&outcome.log))?;
    let emb = cfg.output_dir.join(EMBEDDINGS_FILE);
    write_embeddings(&emb, &embedding_rows(&outcome.params, &manifest)?)?;
    Ok(vec![ckpt, log, emb])
}

/// Embeddings from a checkpoint, then a "CCNF" file, then the raw inputs.
pub fn load_embedding_set(cfg: &RunConfig, manifest: &DatasetManifest) -> Result<EmbeddingSet> {
    if let Some(path) = &cfg.eval.checkpoint {
        let params = load_checkpoint(&cfg.model, path)?;
        return EmbeddingSet::from_model(&params, manifest);
    }
    if let Some(path) = &cfg.eval.embeddings {
        return EmbeddingSet::from_rows(manifest, &read_embeddings(path)?);
    }
    if cfg.eval.raw_features {
        return EmbeddingSet::from_manifest_features(manifest);
    }
    Err(Error::config("evaluation needs eval.checkpoint, eval.embeddings or eval.raw_features"))
}

pub fn eval_rows(cfg: &RunConfig, set: &EmbeddingSet) -> Result<Vec<MetricRow>> {
    let subsets = cfg.subsets()?;
    let mut rows = Vec::new();
    for &protocol in &cfg.eval.protocols {
        for s in &subsets {
            let m = modality_subset_eval(set, s, protocol)?;
            rows.push(MetricRow::new(protocol.as_str(), &s.name(), 0.0, 1, &m));
        }
        if cfg.eval.masked_center {
            let m = masked_center_eval(set, protocol)?;
            rows.push(MetricRow::new(protocol.as_str(), "center", 0.0, 1, &m));
        }
    }
    Ok(rows)
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let manifest = load_data(cfg)?;
    let set = load_embedding_set(cfg, &manifest)?;
    let rows = eval_rows(cfg, &set)?;
    let (csv, svg) = emit_report(&rows, &cfg.output_dir.join(METRICS_FILE))?;
    Ok(vec![csv, svg])
}

pub fn cmd_missing(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let manifest = load_data(cfg)?;
    let set = load_embedding_set(cfg, &manifest)?;
    let protocol = cfg.missing.protocol;
    let rows: Vec<MetricRow> = missing_experiment(&set, &cfg.missing_config(), protocol)?
        .iter()
        .map(|r| MetricRow::new(protocol.as_str(), "center", r.ratio, r.trials, &r.metrics))
        .collect();
    let (csv, svg) = emit_report(&rows, &cfg.output_dir.join(MISSING_FILE))?;
    Ok(vec![csv, svg])
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let manifest = load_data(cfg)?;
    let subset: Subset = cfg.sweep.subset.parse()?;
    let mut cells: Vec<(&str, f64, f64)> = Vec::new();
    cells.extend(cfg.sweep.lambdas.iter().map(|&l| ("lambda", l, cfg.sweep.base_alpha)));
    cells.extend(cfg.sweep.alphas.iter().map(|&a| ("alpha", cfg.sweep.base_lambda, a)));
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for (param, lambda, alpha) in cells {
        let train = TrainConfig { lambda, alpha, ..cfg.train.clone() };
        let params = train_from_scratch(&manifest, &cfg.model, &train)?.params;
        let set = EmbeddingSet::from_model(&params, &manifest)?;
        let m = modality_subset_eval(&set, &subset, cfg.sweep.protocol)?;
        let _ = writeln!(
            out,
            "{param},{lambda:.2},{alpha:.2},{:.6},{:.6},{:.6},{:.6}",
            m.map, m.rank1, m.rank5, m.rank10
        );
    }
    let path = cfg.output_dir.join(SWEEP_FILE);
    write_file(&path, &out)?;
    Ok(vec![path])
}
