use crate::error::{Error, Result};
use crate::numkit::FeatureVec;

/// Features of a P×K×M mini-batch, stored contiguously as `[i][k][m][dim]`.
///
/// The same layout carries gradients with respect to the features.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchFeatures {
    identities: usize,
    samples: usize,
    modalities: usize,
    dim: usize,
    data: Vec<f64>,
    labels: Vec<usize>,
}

impl BatchFeatures {
    pub fn zeros(identities: usize, samples: usize, modalities: usize, dim: usize) -> Self {
        BatchFeatures {
            identities,
            samples,
            modalities,
            dim,
            data: vec![0.0; identities * samples * modalities * dim],
            labels: (0..identities).collect(),
        }
    }

    /// Builds a batch from nested `[identity][sample][modality]` features.
    pub fn from_nested(features: &[Vec<Vec<FeatureVec>>], labels: Vec<usize>) -> Result<Self> {
        let p = features.len();
        if p == 0 {
            return Err(Error::shape("batch has no identities"));
        }
        if labels.len() != p {
            return Err(Error::shape("one label per identity required"));
        }
        let k = features[0].len();
        let m = features[0].first().map_or(0, Vec::len);
        let dim = features[0]
            .first()
            .and_then(|s| s.first())
            .map_or(0, FeatureVec::dim);
        let mut data = Vec::with_capacity(p * k * m * dim);
        for per_id in features {
            if per_id.len() != k {
                return Err(Error::shape("every identity needs the same sample count"));
            }
            for per_sample in per_id {
                if per_sample.len() != m {
                    return Err(Error::shape("every sample needs the same modality count"));
                }
                for f in per_sample {
                    if f.dim() != dim {
                        return Err(Error::shape(format!(
                            "feature dim {} differs from batch dim {dim}",
                            f.dim()
                        )));
                    }
                    data.extend_from_slice(f);
                }
            }
        }
        Ok(BatchFeatures {
            identities: p,
            samples: k,
            modalities: m,
            dim,
            data,
            labels,
        })
    }

    /// Builds a batch from the flat `[i][k][m][dim]` layout.
    pub fn from_flat(
        identities: usize,
        samples: usize,
        modalities: usize,
        dim: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != identities * samples * modalities * dim {
            return Err(Error::shape(format!(
                "flat batch needs {} values, got {}",
                identities * samples * modalities * dim,
                data.len()
            )));
        }
        Ok(BatchFeatures {
            identities,
            samples,
            modalities,
            dim,
            data,
            labels: (0..identities).collect(),
        })
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.identities {
            return Err(Error::shape("one label per identity required"));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn identities(&self) -> usize {
        self.identities
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn modalities(&self) -> usize {
        self.modalities
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    fn offset(&self, i: usize, k: usize, m: usize) -> usize {
        ((i * self.samples + k) * self.modalities + m) * self.dim
    }

    pub fn get(&self, i: usize, k: usize, m: usize) -> &[f64] {
        let o = self.offset(i, k, m);
        &self.data[o..o + self.dim]
    }

    pub fn get_mut(&mut self, i: usize, k: usize, m: usize) -> &mut [f64] {
        let o = self.offset(i, k, m);
        &mut self.data[o..o + self.dim]
    }

    /// All features of identity `i`, `[k][m][dim]` flattened.
    pub fn identity_block(&self, i: usize) -> &[f64] {
        let len = self.samples * self.modalities * self.dim;
        &self.data[i * len..(i + 1) * len]
    }

    pub fn zeros_like(&self) -> Self {
        BatchFeatures {
            data: vec![0.0; self.data.len()],
            labels: self.labels.clone(),
            ..*self
        }
    }

    /// Concatenates two batches along the identity axis.
    pub fn concat(&self, other: &BatchFeatures) -> Result<Self> {
        if (self.samples, self.modalities, self.dim) != (other.samples, other.modalities, other.dim) {
            return Err(Error::shape("batches differ in K, M or dim"));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(BatchFeatures {
            identities: self.identities + other.identities,
            data,
            labels,
            ..*self
        })
    }
}
