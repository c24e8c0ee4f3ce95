//! Run configuration: one JSON document plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::gradcheck::GradcheckConfig;
use crate::data::synth::SynthConfig;
use crate::error::{Error, Result};
use crate::evaluation::{MissingConfig, ProtocolFilter, Subset};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

pub const SEED_ENV: &str = "CCNET_SEED";
pub const CONFIG_ECHO: &str = "config.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// JSONL manifest; the synthetic generator is used when absent.
    pub manifest: Option<PathBuf>,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Trained "CCNL" checkpoint for `data`.
    pub checkpoint: Option<PathBuf>,
    /// "CCNF" embeddings aligned row-by-row with the manifest's samples.
    pub embeddings: Option<PathBuf>,
    /// Evaluate the manifest inputs directly as embeddings.
    pub raw_features: bool,
    pub protocols: Vec<ProtocolFilter>,
    /// Subset names such as "R+N+T".
    pub subsets: Vec<String>,
    /// Adds a masked-center row per protocol.
    pub masked_center: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            checkpoint: None,
            embeddings: None,
            raw_features: false,
            protocols: vec![ProtocolFilter::None, ProtocolFilter::TimeLabel],
            subsets: Subset::table_grid().iter().map(Subset::name).collect(),
            masked_center: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissingSection {
    pub ratios: Vec<f64>,
    pub trials: usize,
    pub protocol: ProtocolFilter,
}

impl Default for MissingSection {
    fn default() -> Self {
        let d = MissingConfig::default();
        MissingSection { ratios: d.ratios, trials: d.trials, protocol: ProtocolFilter::TimeLabel }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// λ values, each trained at `base_alpha`.
    pub lambdas: Vec<f64>,
    /// α values, each trained at `base_lambda`.
    pub alphas: Vec<f64>,
    pub base_lambda: f64,
    pub base_alpha: f64,
    pub protocol: ProtocolFilter,
    pub subset: String,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let grid: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        SweepConfig {
            lambdas: grid.clone(),
            alphas: grid,
            base_lambda: 0.3,
            base_alpha: 0.6,
            protocol: ProtocolFilter::TimeLabel,
            subset: "R+N+T".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Run seed; once resolved it overrides the train, missing and gradcheck seeds.
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub missing: MissingSection,
    pub sweep: SweepConfig,
    pub gradcheck: GradcheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            output_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            missing: MissingSection::default(),
            sweep: SweepConfig::default(),
            gradcheck: GradcheckConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Config(format!("config: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    /// Sets a dotted key such as `train.epochs` to a JSON value; bare words
    /// that are not valid JSON are taken as strings.
    pub fn set_path(&mut self, key: &str, raw: &str) -> Result<()> {
        let mut doc = serde_json::to_value(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut node = &mut doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| Error::Config(format!("`{key}`: `{part}` is not inside an object")))?;
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), value);
                break;
            }
            node = obj
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Default::default()));
        }
        *self = serde_json::from_value(doc).map_err(|e| Error::Config(format!("`{key}`: {e}")))?;
        Ok(())
    }

    /// Flag, then config, then `CCNET_SEED`, then 0. The resolved value is
    /// written back so the echoed config pins it.
    pub fn resolve_seed(&mut self, env: Option<&str>) -> Result<u64> {
        let seed = match (self.seed, env) {
            (Some(s), _) => s,
            (None, Some(v)) => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?,
            (None, None) => 0,
        };
        self.seed = Some(seed);
        self.train.seed = seed;
        self.gradcheck.seed = seed;
        Ok(seed)
    }

    pub fn missing_config(&self) -> MissingConfig {
        MissingConfig {
            ratios: self.missing.ratios.clone(),
            trials: self.missing.trials,
            seed: self.seed.unwrap_or(0),
        }
    }

    pub fn subsets(&self) -> Result<Vec<Subset>> {
        self.eval.subsets.iter().map(|s| s.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(m) = &self.data.manifest {
            if m.as_os_str().is_empty() {
                return Err(Error::config("data.manifest must not be empty"));
            }
        } else {
            self.data.synth.validate()?;
        }
        self.model.validate()?;
        self.train.validate()?;
        self.missing_config().validate()?;
        self.gradcheck.validate()?;
        if self.eval.protocols.is_empty() {
            return Err(Error::config("eval.protocols must not be empty"));
        }
        for s in self.subsets()? {
            if s.indices().iter().any(|&m| m >= self.model.modalities) {
                return Err(Error::config(format!("subset {} exceeds {} modalities", s.name(), self.model.modalities)));
            }
        }
        self.sweep.subset.parse::<Subset>()?;
        let grid_ok = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x >= 0.0);
        if !grid_ok(&self.sweep.lambdas) || !grid_ok(&self.sweep.alphas) {
            return Err(Error::config("sweep values must be finite and nonnegative"));
        }
        if self.sweep.lambdas.is_empty() && self.sweep.alphas.is_empty() {
            return Err(Error::config("sweep grid is empty"));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::config("output_dir must not be empty"));
        }
        Ok(())
    }

    /// Writes the resolved config into the output directory.
    pub fn echo(&self) -> Result<PathBuf> {
        fs::create_dir_all(&self.output_dir).map_err(|e| Error::io(&self.output_dir, e))?;
        let path = self.output_dir.join(CONFIG_ECHO);
        fs::write(&path, self.to_json()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
