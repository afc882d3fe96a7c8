use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::psds::PsdsParams;
use crate::{Error, Result, HOP_LENGTH, N_MELS, SAMPLE_RATE};

const SCENARIO1_TOML: &str = include_str!("../../presets/scenario1.toml");
const SCENARIO2_TOML: &str = include_str!("../../presets/scenario2.toml");

/// Number of convolutional blocks.
pub const N_BLOCKS: usize = 7;

/// Every hyperparameter that depends on the evaluation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPreset {
    pub name: String,
    pub scenario_id: u8,
    /// `(time, frequency)` kernel and stride of each block's average pool.
    pub pool_specs: Vec<(usize, usize)>,
    pub time_mask_max: usize,
    pub freq_mask_max: usize,
    pub median_window: usize,
    /// Seconds; runs separated by strictly less are merged.
    pub gap_tolerance: f64,
    pub thresholds: Vec<f64>,
    pub psds: PsdsParams,
}

/// `0.01 + 0.02 k` for `k = 0..50`.
pub fn default_thresholds() -> Vec<f64> {
    (0..50).map(|k| f64::from(1 + 2 * k) / 100.0).collect()
}

impl ScenarioPreset {
    /// Strict localization: time pooling only in the first two blocks.
    pub fn scenario1() -> Self {
        Self {
            name: "scenario1".into(),
            scenario_id: 1,
            pool_specs: vec![(2, 2), (2, 2), (1, 2), (1, 2), (1, 2), (1, 2), (1, 2)],
            time_mask_max: 25,
            freq_mask_max: 32,
            median_window: 7,
            gap_tolerance: 0.2,
            thresholds: default_thresholds(),
            psds: PsdsParams::scenario1(),
        }
    }

    /// Lax localization: time pooling in the first five blocks.
    pub fn scenario2() -> Self {
        Self {
            name: "scenario2".into(),
            scenario_id: 2,
            pool_specs: vec![(2, 2), (2, 2), (2, 2), (2, 2), (2, 2), (1, 2), (1, 2)],
            time_mask_max: 100,
            freq_mask_max: 16,
            median_window: 7,
            gap_tolerance: 0.2,
            thresholds: default_thresholds(),
            psds: PsdsParams::scenario2(),
        }
    }

    /// Loads a preset shipped in `presets/` by name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "scenario1" => Self::from_toml_str(SCENARIO1_TOML),
            "scenario2" => Self::from_toml_str(SCENARIO2_TOML),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (expected scenario1 or scenario2)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool_specs.len() != N_BLOCKS {
            return Err(Error::Config(format!(
                "preset {} has {} pool specs, expected {N_BLOCKS}",
                self.name,
                self.pool_specs.len()
            )));
        }
        if self.pool_specs.iter().any(|&(t, f)| t == 0 || f == 0) {
            return Err(Error::Config("pool kernels must be positive".into()));
        }
        let freq: usize = self.pool_specs.iter().map(|p| p.1).product();
        if freq != N_MELS {
            return Err(Error::Config(format!(
                "frequency pooling reduces {N_MELS} bins by {freq}, must reduce them to exactly one"
            )));
        }
        if self.median_window.is_multiple_of(2) {
            return Err(Error::Config(format!("median window {} is even", self.median_window)));
        }
        if self.thresholds.is_empty()
            || self.thresholds.iter().any(|&t| !(t > 0.0 && t < 1.0))
            || self.thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config(
                "thresholds must be non-empty, inside (0, 1) and strictly increasing".into(),
            ));
        }
        if !(self.gap_tolerance >= 0.0) {
            return Err(Error::Config("gap tolerance must be non-negative".into()));
        }
        self.psds.validate()
    }

    /// Product of the time-axis pooling strides.
    pub fn time_factor(&self) -> usize {
        self.pool_specs.iter().map(|p| p.0).product()
    }

    /// Seconds covered by one output frame.
    pub fn frame_duration(&self) -> f64 {
        self.time_factor() as f64 * HOP_LENGTH as f64 / SAMPLE_RATE as f64
    }

    /// Output frames for `n_frames` input frames (floor at every block).
    pub fn output_frames(&self, n_frames: usize) -> usize {
        self.pool_specs.iter().fold(n_frames, |t, p| t / p.0)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let preset: Self = toml::from_str(text).map_err(|e| Error::Config(format!("preset: {e}")))?;
        preset.validate()?;
        Ok(preset)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("preset serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// `(time factor, output frame duration in seconds)`.
pub fn output_resolution(preset: &ScenarioPreset) -> (usize, f64) {
    (preset.time_factor(), preset.frame_duration())
}
