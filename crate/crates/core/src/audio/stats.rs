use serde::{Deserialize, Serialize};

use super::SpectralMap;
use crate::{Error, Result};

/// Standard deviations below this are replaced by 1, so constant bins
/// standardize to zero.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-mel-bin mean and standard deviation of a training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits population mean/std per frequency bin over every frame of `maps`.
pub fn fit_stats(maps: &[SpectralMap]) -> Result<FeatureStats> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot fit statistics on an empty corpus".into()))?;
    let n_mels = first.n_mels;
    if let Some(m) = maps.iter().find(|m| m.n_mels != n_mels) {
        return Err(Error::Shape(format!(
            "clip {} has {} bins, expected {n_mels}",
            m.clip_id, m.n_mels
        )));
    }

    let count: usize = maps.iter().map(|m| m.n_frames).sum();
    let mut mean = vec![0.0; n_mels];
    for m in maps {
        for t in 0..m.n_frames {
            for (acc, v) in mean.iter_mut().zip(m.frame(t)) {
                *acc += v;
            }
        }
    }
    mean.iter_mut().for_each(|v| *v /= count as f64);

    // second pass keeps the variance well conditioned
    let mut var = vec![0.0; n_mels];
    for m in maps {
        for t in 0..m.n_frames {
            for ((acc, v), mu) in var.iter_mut().zip(m.frame(t)).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
    }
    let std = var
        .into_iter()
        .map(|v| {
            let s = (v / count as f64).sqrt();
            if s < STD_FLOOR {
                1.0
            } else {
                s
            }
        })
        .collect();

    Ok(FeatureStats { mean, std })
}

/// Z-scores every bin of `map` with `stats`.
pub fn apply_stats(map: &SpectralMap, stats: &FeatureStats) -> Result<SpectralMap> {
    if stats.mean.len() != map.n_mels || stats.std.len() != map.n_mels {
        return Err(Error::Shape(format!(
            "statistics cover {} bins, map has {}",
            stats.mean.len(),
            map.n_mels
        )));
    }
    let mut out = map.clone();
    for row in out.values.chunks_mut(map.n_mels) {
        for ((v, mu), sd) in row.iter_mut().zip(&stats.mean).zip(&stats.std) {
            *v = (*v - mu) / sd;
        }
    }
    Ok(out)
}
