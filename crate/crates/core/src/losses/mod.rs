//! Training objectives: the cross-directional center loss family, the
//! center-type comparison losses and softmax cross-entropy.

pub mod batch;
pub mod cdc;
pub mod ce;
pub mod center;

use serde::{Deserialize, Serialize};

pub use batch::BatchFeatures;
pub use cdc::{
    cdc_gradient, cdc_gradient_weighted, cdc_loss, cdc_modality_loss, cdc_sample_loss, hc_loss,
    modality_centers, sample_centers,
};
pub use ce::{cross_entropy, softmax_cross_entropy, total_loss};
pub use center::{center_gradient, center_loss, CenterBank};

pub const DEFAULT_ALPHA: f64 = 0.6;
pub const DEFAULT_LAMBDA: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdcConfig {
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for CdcConfig {
    fn default() -> Self {
        CdcConfig {
            alpha: DEFAULT_ALPHA,
            lambda: DEFAULT_LAMBDA,
        }
    }
}
