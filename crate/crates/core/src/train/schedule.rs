use crate::nn::ParamSet;
use crate::Result;

use super::TrainConfig;

/// Learning rate at optimization step `step` (0-based): a Gaussian-shaped
/// warmup `lr_max * exp(-5 (1 - step/ramp)^2)` up to `ramp_steps`, then
/// multiplicative decay per step.
pub fn lr_schedule(step: usize, cfg: &TrainConfig) -> f64 {
    if step <= cfg.ramp_steps {
        if cfg.ramp_steps == 0 {
            return cfg.lr_max;
        }
        let x = 1.0 - step as f64 / cfg.ramp_steps as f64;
        cfg.lr_max * (-5.0 * x * x).exp()
    } else {
        cfg.lr_max * cfg.decay.powf((step - cfg.ramp_steps) as f64)
    }
}

/// `teacher <- decay * teacher + (1 - decay) * student` for every entry,
/// including batch-norm running statistics.
pub fn ema_update(teacher: &mut ParamSet, student: &ParamSet, decay: f64) -> Result<()> {
    teacher.ensure_same_layout(student)?;
    let keep = 1.0 - decay;
    for ((_, t), (_, s)) in teacher.iter_mut().zip(student.iter()) {
        for (tv, sv) in t.tensor.data.iter_mut().zip(&s.tensor.data) {
            *tv = decay * *tv + keep * sv;
        }
    }
    Ok(())
}
