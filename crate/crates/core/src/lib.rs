//! # sedpool
//!
//! Polyphonic sound event detection with a convolutional recurrent network
//! whose temporal pooling is tuned per evaluation scenario.
//!
//! The crate covers the whole pipeline:
//!
//! - [`audio`]: resampling, peak normalization, log-mel features and
//!   per-bin standardization.
//! - [`nn`]: a small set of differentiable primitives (conv, batch norm,
//!   pooling, dropout, bidirectional GRU, dense) with hand-written backward
//!   passes and a finite-difference gradient checker.
//! - [`model`]: the seven-block CRNN, scenario presets and output
//!   resolution arithmetic.
//! - [`train`]: mean-teacher training with mixup, time/frequency masking,
//!   Adam and the warmup/decay learning-rate schedule.
//! - [`postprocess`]: thresholding, median filtering and gap merging into
//!   event lists.
//! - [`psds`]: intersection-based polyphonic sound detection scoring.
//! - [`data`]: manifests, feature sets on disk and a deterministic
//!   synthetic corpus generator.
//! - [`pipeline`]: prediction over a feature set, detection files and
//!   scoring of a detection directory.
//!
//! Everything runs on `f64` on the CPU and is bit-deterministic for a
//! fixed seed.

pub mod audio;
pub mod data;
pub mod error;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod postprocess;
pub mod psds;
pub mod train;

pub use error::{Error, Result};

/// Sample rate every clip is resampled to before feature extraction.
pub const SAMPLE_RATE: u32 = 22_050;
/// STFT window length in samples.
pub const N_FFT: usize = 2048;
/// STFT hop length in samples.
pub const HOP_LENGTH: usize = 363;
/// Number of mel bins of the network input.
pub const N_MELS: usize = 128;
/// Number of sound event classes the network predicts.
pub const N_CLASSES: usize = 10;
