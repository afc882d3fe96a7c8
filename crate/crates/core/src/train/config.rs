use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;
use crate::{Error, Result};

/// Training hyperparameters. Defaults are the full-scale recipe; desk runs
/// shrink the counts (epochs, batches, batch split, warmup length).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub weak_per_batch: usize,
    pub strong_per_batch: usize,
    pub unlabeled_per_batch: usize,
    pub lr_max: f64,
    pub ramp_steps: usize,
    pub decay: f64,
    pub ema_decay: f64,
    pub consistency_weight: f64,
    pub mixup_prob: f64,
    pub mixup_alpha: f64,
    /// Time and frequency masking with the preset's maxima.
    pub spec_augment: bool,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batches_per_epoch: 250,
            batch_size: 48,
            weak_per_batch: 12,
            strong_per_batch: 12,
            unlabeled_per_batch: 24,
            lr_max: 0.001,
            ramp_steps: 12_500,
            decay: 0.99995,
            ema_decay: 0.999,
            consistency_weight: 2.0,
            mixup_prob: 0.5,
            mixup_alpha: 0.2,
            spec_augment: true,
            seed: 0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// A run of a few minutes on one core: tiny model, 400 steps of
    /// 2/2/4 clips, warmup and teacher horizon shortened to match.
    pub fn desk() -> Self {
        Self {
            epochs: 20,
            batches_per_epoch: 20,
            batch_size: 8,
            weak_per_batch: 2,
            strong_per_batch: 2,
            unlabeled_per_batch: 4,
            ramp_steps: 40,
            ema_decay: 0.99,
            model: ModelConfig::tiny(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.weak_per_batch + self.strong_per_batch + self.unlabeled_per_batch != self.batch_size {
            return bad(format!(
                "batch split {}/{}/{} does not sum to batch size {}",
                self.weak_per_batch, self.strong_per_batch, self.unlabeled_per_batch, self.batch_size
            ));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.batches_per_epoch == 0 {
            return bad("epochs, batches per epoch and batch size must be positive".into());
        }
        if !(self.lr_max > 0.0 && self.lr_max.is_finite()) {
            return bad(format!("lr_max must be positive, got {}", self.lr_max));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay must lie in (0, 1], got {}", self.decay));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return bad(format!("ema_decay must lie in [0, 1), got {}", self.ema_decay));
        }
        if !(self.consistency_weight >= 0.0 && self.consistency_weight.is_finite()) {
            return bad(format!("consistency_weight must be non-negative, got {}", self.consistency_weight));
        }
        if !(0.0..=1.0).contains(&self.mixup_prob) {
            return bad(format!("mixup_prob must lie in [0, 1], got {}", self.mixup_prob));
        }
        if !(self.mixup_alpha > 0.0 && self.mixup_alpha.is_finite()) {
            return bad(format!("mixup_alpha must be positive, got {}", self.mixup_alpha));
        }
        self.model.validate()
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.batches_per_epoch
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("training config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("training config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.total_steps(), 50_000);
        assert_eq!(TrainConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    }

    #[test]
    fn desk_config_only_shortens_the_run() {
        let desk = TrainConfig::desk();
        desk.validate().unwrap();
        let full = TrainConfig::default();
        assert_eq!(desk.total_steps(), 400);
        assert_eq!(desk.lr_max, full.lr_max);
        assert_eq!(desk.consistency_weight, full.consistency_weight);
        assert_eq!((desk.mixup_prob, desk.mixup_alpha), (full.mixup_prob, full.mixup_alpha));
    }

    #[test]
    fn shipped_desk_file_matches() {
        let text = include_str!("../../presets/desk-train.toml");
        assert_eq!(TrainConfig::from_toml_str(text).unwrap(), TrainConfig::desk());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = TrainConfig::from_toml_str(
            "epochs = 3\nbatch_size = 8\nweak_per_batch = 2\nstrong_per_batch = 2\nunlabeled_per_batch = 4\n",
        )
        .unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.ema_decay, 0.999);
    }

    #[test]
    fn inconsistent_split_is_rejected() {
        let cfg = TrainConfig { batch_size: 47, ..TrainConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(TrainConfig::from_toml_str("typo_field = 1").is_err());
    }
}
