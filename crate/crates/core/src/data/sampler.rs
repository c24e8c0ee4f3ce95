use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::DatasetManifest;
use crate::error::{Error, Result};

/// P identities × K samples, as indices into the manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniBatch {
    /// Identity of each group.
    pub identities: Vec<u64>,
    /// Classifier label of each group (position among train identities).
    pub labels: Vec<usize>,
    /// `groups[p][k]` is a manifest sample index.
    pub groups: Vec<Vec<usize>>,
}

impl MiniBatch {
    pub fn p(&self) -> usize {
        self.groups.len()
    }

    pub fn k(&self) -> usize {
        self.groups.first().map_or(0, Vec::len)
    }

    pub fn sample_count(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }
}

/// Draws P distinct train identities, then K samples of each.
///
/// Samples are drawn without replacement when an identity has at least K of
/// them and with replacement otherwise, so the batch shape is always P×K.
pub fn pk_sample<R: Rng + ?Sized>(manifest: &DatasetManifest, p: usize, k: usize, rng: &mut R) -> Result<MiniBatch> {
    if p == 0 || k == 0 {
        return Err(Error::config("P and K must be positive"));
    }
    let groups = manifest.train_groups();
    if p > groups.len() {
        return Err(Error::config(format!(
            "P = {p} exceeds the {} train identities",
            groups.len()
        )));
    }
    let ids: Vec<(usize, (&u64, &Vec<usize>))> = groups.iter().enumerate().collect();
    let chosen: Vec<_> = ids.choose_multiple(rng, p).cloned().collect();
    let mut batch = MiniBatch {
        identities: Vec::with_capacity(p),
        labels: Vec::with_capacity(p),
        groups: Vec::with_capacity(p),
    };
    for (label, (&id, members)) in chosen {
        let picked: Vec<usize> = if members.len() >= k {
            let mut v: Vec<usize> = members.choose_multiple(rng, k).copied().collect();
            v.shuffle(rng);
            v
        } else {
            (0..k).map(|_| *members.choose(rng).expect("nonempty group")).collect()
        };
        batch.identities.push(id);
        batch.labels.push(label);
        batch.groups.push(picked);
    }
    Ok(batch)
}
