//! Adaptive layer normalization and the conventional baselines it is compared with.

pub mod alb;
pub mod alnu;
pub mod baseline;
pub mod stats;

pub use alb::{alb_backward, alb_forward, AlbCache, AlbParams};
pub use alnu::{alnu_backward, alnu_forward, alnu_forward_cached, AlnuCache, AlnuParams};
pub use baseline::{BaselineNorm, NormMode};
pub use stats::{layer_stats, normalize, DEFAULT_EPSILON};
