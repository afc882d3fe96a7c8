//! Differentiable building blocks with explicit forward/backward passes.
//!
//! Each primitive exists twice: as a plain function on [`Tensor`]s (for
//! example [`conv2d`] / [`conv2d_backward`]), and as a [`Layer`] that reads
//! its weights from a [`ParamSet`] by name and accumulates gradients into
//! the same set.

mod activation;
mod batch_norm;
mod checkpoint;
mod conv;
mod dense;
mod dropout;
mod gradcheck;
mod gru;
mod layers;
mod pool;
mod tensor;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar};
pub use batch_norm::{
    batch_norm_backward, batch_norm_eval, batch_norm_train, BatchNormCache, BN_EPS, BN_MOMENTUM,
};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use conv::{conv2d, conv2d_backward};
pub use dense::{dense, dense_backward};
pub use dropout::{dropout, dropout_backward};
pub use gradcheck::{check_gradients, finite_difference_check, GradCheckReport, DEFAULT_STEP};
pub use gru::{
    bigru_layer, bigru_layer_backward, gru_direction, gru_direction_backward, BiGruLayerCache,
    GruCache, GruGrads, GruWeights,
};
pub use layers::{AvgPool, BatchNorm, BiGru, Conv2d, Dense, Dropout, Layer, Relu, Sigmoid};
pub use pool::{avg_pool, avg_pool_backward};
pub use tensor::{Param, ParamSet, Tensor};

use rand::RngCore;

/// Training mode uses batch statistics and dropout; evaluation mode uses
/// running statistics and disables dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-call context for a forward pass.
pub struct Ctx<'a> {
    pub mode: Mode,
    pub rng: &'a mut dyn RngCore,
}

impl<'a> Ctx<'a> {
    pub fn new(mode: Mode, rng: &'a mut dyn RngCore) -> Self {
        Self { mode, rng }
    }
}
