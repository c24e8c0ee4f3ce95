//! Per-modality embeddings, modality subsets, masked centers and the
//! random modality-missing experiment.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ranking::{evaluate, Metrics, ProtocolFilter, RecordMeta};
use crate::data::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::model::{modality_embeddings, ModelParams};
use crate::numkit::FeatureVec;

const LETTERS: [char; 3] = ['R', 'N', 'T'];

/// One record's per-modality embeddings; `None` marks an absent modality.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEmbedding {
    pub meta: RecordMeta,
    pub features: Vec<Option<Vec<f64>>>,
}

impl SampleEmbedding {
    pub fn mask(&self) -> Vec<bool> {
        self.features.iter().map(Option::is_some).collect()
    }
}

/// Query and gallery embeddings of one evaluation split.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub query: Vec<SampleEmbedding>,
    pub gallery: Vec<SampleEmbedding>,
}

impl EmbeddingSet {
    /// Runs every query/gallery sample of `manifest` through the model.
    pub fn from_model(params: &ModelParams, manifest: &DatasetManifest) -> Result<Self> {
        Self::from_manifest_with(manifest, |i| modality_embeddings(params, manifest.samples[i].inputs()))
    }

    /// Treats the manifest inputs themselves as embeddings.
    pub fn from_manifest_features(manifest: &DatasetManifest) -> Result<Self> {
        Self::from_manifest_with(manifest, |i| Ok(manifest.samples[i].inputs().to_vec()))
    }

    /// Rows of a "CCNF" block aligned with the manifest's samples: row `i`
    /// is the concatenation of sample `i`'s M modality embeddings, absent
    /// modalities per the manifest mask are ignored.
    pub fn from_rows(manifest: &DatasetManifest, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != manifest.len() {
            return Err(Error::input(format!(
                "embedding file has {} rows, manifest has {} samples",
                rows.len(),
                manifest.len()
            )));
        }
        let mm = manifest.modalities();
        if mm == 0 || rows.iter().any(|r| r.is_empty() || r.len() % mm != 0) {
            return Err(Error::input("embedding rows must split evenly into modality blocks"));
        }
        Self::from_manifest_with(manifest, |i| {
            let d = rows[i].len() / mm;
            Ok(manifest.samples[i]
                .mask()
                .iter()
                .enumerate()
                .map(|(m, &present)| present.then(|| rows[i][m * d..(m + 1) * d].to_vec()))
                .collect())
        })
    }

    fn from_manifest_with(
        manifest: &DatasetManifest,
        mut embed: impl FnMut(usize) -> Result<Vec<Option<Vec<f64>>>>,
    ) -> Result<Self> {
        let mut set = EmbeddingSet { query: Vec::new(), gallery: Vec::new() };
        for (i, s) in manifest.samples.iter().enumerate() {
            let target = match s.split {
                Split::Query => &mut set.query,
                Split::Gallery => &mut set.gallery,
                Split::Train => continue,
            };
            target.push(SampleEmbedding {
                meta: RecordMeta::with_time(s.identity, s.time_label),
                features: embed(i)?,
            });
        }
        Ok(set)
    }

    pub fn modalities(&self) -> usize {
        self.query.first().or(self.gallery.first()).map_or(0, |s| s.features.len())
    }

    fn metas(&self) -> (Vec<RecordMeta>, Vec<RecordMeta>) {
        (
            self.query.iter().map(|s| s.meta).collect(),
            self.gallery.iter().map(|s| s.meta).collect(),
        )
    }
}

/// A nonempty set of modality indices in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Subset(Vec<usize>);

impl Subset {
    pub fn new(mut modalities: Vec<usize>) -> Result<Self> {
        if modalities.is_empty() {
            return Err(Error::config("modality subset is empty"));
        }
        modalities.sort_unstable();
        if modalities.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("modality subset repeats a modality"));
        }
        Ok(Subset(modalities))
    }

    pub fn all(m: usize) -> Self {
        Subset((0..m).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    /// `R`, `R+N`, … for the first three modalities; `m3` beyond.
    pub fn name(&self) -> String {
        self.0
            .iter()
            .map(|&m| LETTERS.get(m).map_or(format!("m{m}"), |c| c.to_string()))
            .collect::<Vec<_>>()
            .join("+")
    }

    /// The seven nonempty subsets of {R, N, T}, singles first.
    pub fn table_grid() -> Vec<Subset> {
        ["R", "N", "T", "R+N", "R+T", "N+T", "R+N+T"]
            .iter()
            .map(|s| s.parse().expect("valid literal"))
            .collect()
    }
}

impl std::str::FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split('+')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| match p.to_ascii_lowercase().as_str() {
                "r" | "rgb" => Ok(0),
                "n" | "nir" => Ok(1),
                "t" | "tir" => Ok(2),
                other => Err(Error::config(format!("unknown modality '{other}' in subset"))),
            })
            .collect::<Result<_>>()?;
        Subset::new(parts)
    }
}

/// `C′ = Σ_m T^m f^m / Σ_m T^m`.
pub fn masked_center<F: AsRef<[f64]>>(features: &[F], mask: &[bool]) -> Result<FeatureVec> {
    if features.len() != mask.len() {
        return Err(Error::shape("one mask bit per modality feature is required"));
    }
    let present: Vec<&[f64]> = features.iter().zip(mask).filter(|(_, &t)| t).map(|(f, _)| f.as_ref()).collect();
    let first = present
        .first()
        .ok_or_else(|| Error::input("masked center of a sample with no modality present"))?;
    let d = first.len();
    if present.iter().any(|f| f.len() != d) {
        return Err(Error::shape("modality features differ in dimension"));
    }
    let t = present.len() as f64;
    let mut c = vec![0.0; d];
    for f in &present {
        for (cj, fj) in c.iter_mut().zip(f.iter()) {
            *cj += fj;
        }
    }
    c.iter_mut().for_each(|v| *v /= t);
    FeatureVec::new(c)
}

fn concat(s: &SampleEmbedding, subset: &Subset) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for &m in subset.indices() {
        let f = s
            .features
            .get(m)
            .ok_or_else(|| Error::config(format!("modality {m} beyond the embedding's {}", s.features.len())))?
            .as_ref()
            .ok_or_else(|| Error::input(format!("identity {} lacks modality {}", s.meta.identity, subset.name())))?;
        out.extend_from_slice(f);
    }
    Ok(out)
}

/// Evaluation on the concatenation of the chosen modalities' embeddings.
pub fn modality_subset_eval(set: &EmbeddingSet, subset: &Subset, protocol: ProtocolFilter) -> Result<Metrics> {
    let q: Vec<Vec<f64>> = set.query.iter().map(|s| concat(s, subset)).collect::<Result<_>>()?;
    let g: Vec<Vec<f64>> = set.gallery.iter().map(|s| concat(s, subset)).collect::<Result<_>>()?;
    let (qm, gm) = set.metas();
    evaluate(&q, &qm, &g, &gm, protocol)
}

fn centers_with_masks(samples: &[SampleEmbedding], masks: &[Vec<bool>]) -> Result<Vec<FeatureVec>> {
    samples
        .iter()
        .zip(masks)
        .map(|(s, mask)| {
            let zeros = vec![0.0; s.features.iter().flatten().map(Vec::len).next().unwrap_or(0)];
            let feats: Vec<&[f64]> = s.features.iter().map(|f| f.as_deref().unwrap_or(&zeros)).collect();
            masked_center(&feats, mask)
        })
        .collect()
}

/// Evaluation with every record represented by its masked center.
pub fn masked_center_eval(set: &EmbeddingSet, protocol: ProtocolFilter) -> Result<Metrics> {
    let qm: Vec<Vec<bool>> = set.query.iter().map(SampleEmbedding::mask).collect();
    let gm: Vec<Vec<bool>> = set.gallery.iter().map(SampleEmbedding::mask).collect();
    masked_eval(set, &qm, &gm, protocol)
}

fn masked_eval(set: &EmbeddingSet, qmask: &[Vec<bool>], gmask: &[Vec<bool>], protocol: ProtocolFilter) -> Result<Metrics> {
    let q = centers_with_masks(&set.query, qmask)?;
    let g = centers_with_masks(&set.gallery, gmask)?;
    let (qm, gm) = set.metas();
    evaluate(&q, &qm, &g, &gm, protocol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissingConfig {
    pub ratios: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for MissingConfig {
    fn default() -> Self {
        MissingConfig {
            ratios: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            trials: 10,
            seed: 0,
        }
    }
}

impl MissingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.ratios.is_empty() || self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::config("missing ratios must be a nonempty list within [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissingRow {
    pub ratio: f64,
    pub trials: usize,
    pub metrics: Metrics,
}

/// Draws presence masks for `n` complete records of `m` modalities: a
/// `ratio` share of them loses modalities, half of those one and the rest
/// two (never all), each choice uniform.
pub fn draw_missing_masks(n: usize, m: usize, ratio: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<bool>> {
    let affected = ((ratio * n as f64).round() as usize).min(n);
    let one = affected / 2;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut masks = vec![vec![true; m]; n];
    for (rank, &i) in order.iter().take(affected).enumerate() {
        let drop = if rank < one { 1 } else { 2 }.min(m.saturating_sub(1));
        let all: Vec<usize> = (0..m).collect();
        for &d in all.choose_multiple(rng, drop) {
            masks[i][d] = false;
        }
    }
    masks
}

fn exact_mean(values: &[f64]) -> f64 {
    if values.iter().all(|v| *v == values[0]) {
        values[0]
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// For each ratio and trial, masks query and gallery records at random and
/// evaluates every record by its masked center; rows hold trial means.
///
/// Trial `t` of ratio index `r` draws from stream `(r, t)` of a generator
/// seeded with `cfg.seed`, so rows are independent of each other.
pub fn missing_experiment(set: &EmbeddingSet, cfg: &MissingConfig, protocol: ProtocolFilter) -> Result<Vec<MissingRow>> {
    cfg.validate()?;
    if set.query.iter().chain(&set.gallery).any(|s| s.features.iter().any(Option::is_none)) {
        return Err(Error::input("the missing-modality experiment needs complete records"));
    }
    let m = set.modalities();
    let mut rows = Vec::with_capacity(cfg.ratios.len());
    for (ri, &ratio) in cfg.ratios.iter().enumerate() {
        let mut per_trial = Vec::with_capacity(cfg.trials);
        for trial in 0..cfg.trials {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(((ri as u64) << 32) | trial as u64);
            let qmask = draw_missing_masks(set.query.len(), m, ratio, &mut rng);
            let gmask = draw_missing_masks(set.gallery.len(), m, ratio, &mut rng);
            per_trial.push(masked_eval(set, &qmask, &gmask, protocol)?);
        }
        let pick = |f: fn(&Metrics) -> f64| exact_mean(&per_trial.iter().map(f).collect::<Vec<_>>());
        rows.push(MissingRow {
            ratio,
            trials: cfg.trials,
            metrics: Metrics {
                map: pick(|x| x.map),
                rank1: pick(|x| x.rank1),
                rank5: pick(|x| x.rank5),
                rank10: pick(|x| x.rank10),
                counted_queries: per_trial[0].counted_queries,
            },
        });
    }
    Ok(rows)
}
