//! Waveform preprocessing and log-mel feature extraction.

mod cache;
mod melspec;
mod stats;
mod wav;
mod waveform;

pub use cache::{read_feature_cache, write_feature_cache, FEATURE_CACHE_MAGIC};
pub use melspec::{log_mel, mel_filterbank, LogMelExtractor, SpectralMap, LOG_FLOOR};
pub use stats::{apply_stats, fit_stats, FeatureStats, STD_FLOOR};
pub use wav::{read_wav, write_wav_i16};
pub use waveform::{peak_normalize, resample, Waveform};

use crate::Result;

/// Full preprocessing chain for one clip: resample to 22.05 kHz, peak
/// normalize, log-mel with the default framing. The result is not yet
/// standardized.
pub fn extract_features(wave: &Waveform, clip_id: &str) -> Result<SpectralMap> {
    let resampled = resample(wave, crate::SAMPLE_RATE)?;
    let normalized = peak_normalize(&resampled);
    LogMelExtractor::default_config().extract(&normalized, clip_id)
}
