//! The seven-block CRNN and its scenario presets.

mod crnn;
mod pooling;
mod preset;

pub use crnn::{CrnnModel, ForwardCache, ModelConfig, ModelOutput};
pub use pooling::{linear_softmax_pool, linear_softmax_pool_backward, POOL_EPS};
pub use preset::{default_thresholds, output_resolution, ScenarioPreset, N_BLOCKS};
