//! Mean-teacher semi-supervised training.
//!
//! Every batch holds weakly labeled, strongly labeled and unlabeled clips
//! in a fixed 1:1:2 ratio. The student is trained on binary cross entropy
//! against the labels plus a mean-squared consistency cost against an
//! exponential moving average of itself (the teacher).

mod adam;
mod augment;
mod batch;
mod config;
mod loss;
mod schedule;
mod trainer;

pub use adam::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use augment::{apply_masks, draw_masks, mixup, mixup_with, time_freq_mask, MaskSpans, MixupDraw};
pub use batch::{rasterize_strong, LabeledBatch, StrongClip, Subset, TrainingData, WeakClip};
pub use config::TrainConfig;
pub use loss::{compute_loss, LossGrads, LossParts, PROB_CLAMP};
pub use schedule::{ema_update, lr_schedule};
pub use trainer::{train, EpochMetrics, TrainOutcome, Trainer};
