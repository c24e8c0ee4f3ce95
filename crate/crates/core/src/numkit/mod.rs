//! Dense kernels with hand-written backward passes, all in f64.

pub mod activation;
pub mod affine;
pub mod conv;
pub mod finite_diff;
pub mod pool;
pub mod tape;
pub mod tensor;

pub use activation::{relu, sigmoid, sigmoid_backward};
pub use affine::{affine_backward, affine_map, AffineGrads};
pub use conv::{conv2d, conv2d_backward, Conv2dGrads};
pub use finite_diff::{finite_diff_grad, max_relative_error};
pub use pool::{global_pool, global_pool_backward, PoolMode};
pub use tape::{GradTape, Parameters};
pub use tensor::{FeatureMap, FeatureVec, Tensor};
