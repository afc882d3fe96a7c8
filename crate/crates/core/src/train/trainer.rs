use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    compute_loss, ema_update, lr_schedule, mixup, time_freq_mask, Adam, LabeledBatch, LossParts, TrainConfig,
    TrainingData,
};
use crate::model::{CrnnModel, ScenarioPreset};
use crate::nn::{Ctx, Mode};
use crate::{Error, Result, N_MELS};

/// Cycles through a pool in freshly shuffled order.
#[derive(Debug, Clone)]
struct IndexStream {
    order: Vec<usize>,
    pos: usize,
}

impl IndexStream {
    fn new(n: usize) -> Self {
        Self { order: (0..n).collect(), pos: n }
    }

    fn take(&mut self, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub steps: usize,
    /// Learning rate of the last step in the epoch.
    pub lr: f64,
    /// Batch means of the loss terms.
    pub loss: LossParts,
}

impl EpochMetrics {
    /// One JSON object, no trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub student: CrnnModel,
    pub teacher: CrnnModel,
    pub metrics: Vec<EpochMetrics>,
}

/// Owns the student, the teacher and the optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub preset: ScenarioPreset,
    pub student: CrnnModel,
    pub teacher: CrnnModel,
    data: TrainingData,
    adam: Adam,
    rng: ChaCha8Rng,
    step: usize,
    n_frames: usize,
    streams: [IndexStream; 3],
}

impl Trainer {
    pub fn new(config: &TrainConfig, preset: &ScenarioPreset, data: TrainingData) -> Result<Self> {
        config.validate()?;
        preset.validate()?;
        data.validate(config.weak_per_batch > 0, config.strong_per_batch > 0, config.unlabeled_per_batch > 0)?;
        if data.n_classes != config.model.n_classes {
            return Err(Error::Config(format!(
                "data has {} classes but the model predicts {}",
                data.n_classes, config.model.n_classes
            )));
        }
        let n_frames = data.n_frames();
        if n_frames < preset.time_factor() {
            return Err(Error::Config(format!(
                "clips have {n_frames} frames, fewer than the time pooling factor {}",
                preset.time_factor()
            )));
        }
        let student = CrnnModel::build(preset, &config.model, config.seed)?;
        let teacher = student.clone();
        let streams = [
            IndexStream::new(data.weak.len()),
            IndexStream::new(data.strong.len()),
            IndexStream::new(data.unlabeled.len()),
        ];
        Ok(Self {
            config: config.clone(),
            preset: preset.clone(),
            student,
            teacher,
            data,
            adam: Adam::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1)),
            step: 0,
            n_frames,
            streams,
        })
    }

    /// Optimization steps taken so far.
    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// Frames per clip after padding.
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    /// Draws the next batch and applies mixup and masking.
    pub fn next_batch(&mut self) -> Result<LabeledBatch> {
        let cfg = &self.config;
        let weak = self.streams[0].take(cfg.weak_per_batch, &mut self.rng);
        let strong = self.streams[1].take(cfg.strong_per_batch, &mut self.rng);
        let unlabeled = self.streams[2].take(cfg.unlabeled_per_batch, &mut self.rng);
        let t_out = self.preset.output_frames(self.n_frames);
        let mut batch =
            self.data.assemble(&weak, &strong, &unlabeled, self.n_frames, t_out, self.preset.frame_duration())?;
        mixup(&mut batch, &mut self.rng, cfg.mixup_prob, cfg.mixup_alpha)?;
        if cfg.spec_augment {
            let plane = self.n_frames * N_MELS;
            for sample in batch.features.data.chunks_exact_mut(plane) {
                time_freq_mask(
                    sample,
                    self.n_frames,
                    N_MELS,
                    self.preset.time_mask_max,
                    self.preset.freq_mask_max,
                    &mut self.rng,
                );
            }
        }
        Ok(batch)
    }

    /// One optimization step on `batch`: student forward in training mode,
    /// teacher forward in evaluation mode on the same input, loss, Adam
    /// update of the student, then the teacher moving average.
    pub fn step_on(&mut self, batch: &LabeledBatch) -> Result<LossParts> {
        self.student.params.zero_grads();
        let (s_out, cache) = self.student.forward(&batch.features, &mut Ctx::new(Mode::Train, &mut self.rng))?;
        let (t_out, _) = self.teacher.forward(&batch.features, &mut Ctx::new(Mode::Eval, &mut self.rng))?;
        let (parts, grads) = compute_loss(&s_out, &t_out, batch, self.config.consistency_weight)?;
        self.student.backward(&cache, &grads.d_frame, &grads.d_clip)?;
        let lr = lr_schedule(self.step, &self.config);
        self.adam.step(&mut self.student.params, lr)?;
        ema_update(&mut self.teacher.params, &self.student.params, self.config.ema_decay)?;
        self.step += 1;
        Ok(parts)
    }

    pub fn step(&mut self) -> Result<LossParts> {
        let batch = self.next_batch()?;
        self.step_on(&batch)
    }

    pub fn run_epoch(&mut self, epoch: usize) -> Result<EpochMetrics> {
        let n = self.config.batches_per_epoch;
        let mut sum = LossParts::default();
        for _ in 0..n {
            let p = self.step()?;
            sum.bce_clip += p.bce_clip;
            sum.bce_frame += p.bce_frame;
            sum.mse_clip += p.mse_clip;
            sum.mse_frame += p.mse_frame;
            sum.total += p.total;
        }
        let k = n as f64;
        Ok(EpochMetrics {
            epoch,
            steps: self.step,
            lr: lr_schedule(self.step - 1, &self.config),
            loss: LossParts {
                bce_clip: sum.bce_clip / k,
                bce_frame: sum.bce_frame / k,
                mse_clip: sum.mse_clip / k,
                mse_frame: sum.mse_frame / k,
                total: sum.total / k,
            },
        })
    }

    pub fn finish(self, metrics: Vec<EpochMetrics>) -> TrainOutcome {
        TrainOutcome { student: self.student, teacher: self.teacher, metrics }
    }
}

/// Runs every epoch, calling `on_epoch` after each one.
pub fn train(
    config: &TrainConfig,
    data: TrainingData,
    preset: &ScenarioPreset,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config, preset, data)?;
    let mut metrics = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let m = trainer.run_epoch(epoch)?;
        on_epoch(&m);
        metrics.push(m);
    }
    Ok(trainer.finish(metrics))
}
