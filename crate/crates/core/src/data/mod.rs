//! Multi-modal identity records: synthetic generation, JSONL manifests,
//! PK mini-batch sampling and the "CCNF" embedding format.

pub mod embeddings;
pub mod manifest;
pub mod sampler;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embeddings::{decode_embeddings, encode_embeddings, read_embeddings, write_embeddings};
pub use manifest::{load_manifest, parse_manifest, write_manifest};
pub use sampler::{pk_sample, MiniBatch};
pub use synth::{generate_synthetic, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Gallery,
    Query,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Gallery => "gallery",
            Split::Query => "query",
        }
    }
}

/// One capture event of an identity: up to M aligned modality inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub identity: u64,
    pub time_label: i64,
    pub split: Split,
    inputs: Vec<Option<Vec<f64>>>,
}

impl Sample {
    pub fn new(identity: u64, time_label: i64, split: Split, inputs: Vec<Option<Vec<f64>>>) -> Result<Self> {
        if inputs.iter().all(Option::is_none) {
            return Err(Error::input("empty sample: no modality present"));
        }
        if inputs.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::input("sample input contains a non-finite value"));
        }
        Ok(Sample {
            identity,
            time_label,
            split,
            inputs,
        })
    }

    pub fn inputs(&self) -> &[Option<Vec<f64>>] {
        &self.inputs
    }

    pub fn input(&self, m: usize) -> Option<&[f64]> {
        self.inputs.get(m).and_then(|x| x.as_deref())
    }

    pub fn modalities(&self) -> usize {
        self.inputs.len()
    }

    /// Presence bit per modality.
    pub fn mask(&self) -> Vec<bool> {
        self.inputs.iter().map(Option::is_some).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.inputs.iter().all(Option::is_some)
    }
}

/// An ordered collection of samples; sample order is significant for
/// every downstream index (batches, rankings, embedding rows).
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub samples: Vec<Sample>,
}

impl DatasetManifest {
    /// Checks modality-count and dimension consistency.
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let m = DatasetManifest { samples };
        m.check_dims()?;
        Ok(m)
    }

    fn check_dims(&self) -> Result<()> {
        let mut modalities = None;
        let mut dim = None;
        for (n, s) in self.samples.iter().enumerate() {
            if *modalities.get_or_insert(s.modalities()) != s.modalities() {
                return Err(Error::input(format!("sample {n} has a different modality count")));
            }
            for x in s.inputs().iter().flatten() {
                if *dim.get_or_insert(x.len()) != x.len() {
                    return Err(Error::input(format!(
                        "sample {n} has input dimension {}, expected {}",
                        x.len(),
                        dim.unwrap_or(0)
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn modalities(&self) -> usize {
        self.samples.first().map_or(0, Sample::modalities)
    }

    /// Common input dimension (0 for an empty manifest).
    pub fn input_dim(&self) -> usize {
        self.samples
            .iter()
            .flat_map(|s| s.inputs().iter().flatten())
            .map(Vec::len)
            .next()
            .unwrap_or(0)
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.samples[i].split == split).collect()
    }

    /// Train identities in ascending order; position = classifier label.
    pub fn train_identities(&self) -> Vec<u64> {
        self.samples
            .iter()
            .filter(|s| s.split == Split::Train)
            .map(|s| s.identity)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Train sample indices grouped by identity, identities ascending.
    pub fn train_groups(&self) -> BTreeMap<u64, Vec<usize>> {
        let mut g: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for i in self.indices(Split::Train) {
            g.entry(self.samples[i].identity).or_default().push(i);
        }
        g
    }

    /// Every query identity must have a gallery entry with a different
    /// time label. Returns the offending query index otherwise.
    pub fn check_query_coverage(&self) -> std::result::Result<(), usize> {
        let gallery: Vec<&Sample> = self.samples.iter().filter(|s| s.split == Split::Gallery).collect();
        for (i, q) in self.samples.iter().enumerate() {
            if q.split != Split::Query {
                continue;
            }
            let covered = gallery
                .iter()
                .any(|g| g.identity == q.identity && g.time_label != q.time_label);
            if !covered {
                return Err(i);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sample_rejected() {
        let e = Sample::new(1, 0, Split::Train, vec![None, None, None]).unwrap_err();
        assert!(e.to_string().contains("empty sample"));
    }

    #[test]
    fn mask_tracks_presence() {
        let s = Sample::new(1, 0, Split::Query, vec![Some(vec![1.0]), None, Some(vec![2.0])]).unwrap();
        assert_eq!(s.mask(), vec![true, false, true]);
        assert!(!s.is_complete());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = Sample::new(1, 0, Split::Train, vec![Some(vec![1.0, 2.0])]).unwrap();
        let b = Sample::new(2, 0, Split::Train, vec![Some(vec![1.0])]).unwrap();
        assert!(DatasetManifest::new(vec![a, b]).is_err());
    }

    #[test]
    fn query_coverage() {
        let s = |id, t, split| Sample::new(id, t, split, vec![Some(vec![0.0])]).unwrap();
        let ok = DatasetManifest::new(vec![s(5, 2, Split::Query), s(5, 3, Split::Gallery)]).unwrap();
        assert!(ok.check_query_coverage().is_ok());
        let bad = DatasetManifest::new(vec![s(5, 2, Split::Query), s(5, 2, Split::Gallery)]).unwrap();
        assert_eq!(bad.check_query_coverage(), Err(0));
    }
}
