use super::LabeledBatch;
use crate::model::ModelOutput;
use crate::nn::Tensor;
use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the
/// cross entropy.
pub const PROB_CLAMP: f64 = 1e-7;

/// The four loss terms and their weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossParts {
    pub bce_clip: f64,
    pub bce_frame: f64,
    pub mse_clip: f64,
    pub mse_frame: f64,
    pub total: f64,
}

/// Gradients of the total loss with respect to the student outputs.
#[derive(Debug, Clone)]
pub struct LossGrads {
    pub d_frame: Tensor,
    pub d_clip: Tensor,
}

/// Mean binary cross entropy of `probs` against `targets`, accumulating
/// its gradient into `grad`.
fn bce(probs: &[f64], targets: &[f64], grad: &mut [f64]) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let n = probs.len() as f64;
    let mut total = 0.0;
    for ((&p, &y), g) in probs.iter().zip(targets).zip(grad) {
        let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        total -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        if pc == p {
            *g += (p - y) / (p * (1.0 - p)) / n;
        }
    }
    total / n
}

/// Mean squared difference, accumulating `weight * d/ds` into `grad`.
fn mse(student: &[f64], teacher: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
    if student.is_empty() {
        return 0.0;
    }
    let n = student.len() as f64;
    let mut total = 0.0;
    for ((&s, &t), g) in student.iter().zip(teacher).zip(grad) {
        let d = s - t;
        total += d * d;
        *g += weight * 2.0 * d / n;
    }
    total / n
}

/// Clip-level cross entropy on the weak subset, frame-level cross entropy
/// on the strong subset, and `consistency_weight` times the clip and frame
/// mean-squared distance to the teacher over the whole batch. The teacher
/// outputs are treated as constants.
pub fn compute_loss(
    student: &ModelOutput,
    teacher: &ModelOutput,
    batch: &LabeledBatch,
    consistency_weight: f64,
) -> Result<(LossParts, LossGrads)> {
    let [b, t_out, c] = student.frame_probs.dims::<3>("student frame output")?;
    if teacher.frame_probs.shape() != student.frame_probs.shape()
        || student.clip_probs.shape() != [b, c]
        || teacher.clip_probs.shape() != [b, c]
    {
        return Err(Error::Shape("student and teacher outputs disagree in shape".into()));
    }
    let (nw, ns) = (batch.n_weak, batch.n_strong);
    if b != batch.len() || batch.weak_labels.len() != nw * c || batch.strong_labels.len() != ns * t_out * c {
        return Err(Error::Shape(format!(
            "batch labels do not fit outputs of shape [{b}, {t_out}, {c}]"
        )));
    }

    let mut d_frame = vec![0.0; b * t_out * c];
    let mut d_clip = vec![0.0; b * c];
    let bce_clip = bce(&student.clip_probs.data[..nw * c], &batch.weak_labels, &mut d_clip[..nw * c]);
    let frame_range = nw * t_out * c..(nw + ns) * t_out * c;
    let bce_frame = bce(
        &student.frame_probs.data[frame_range.clone()],
        &batch.strong_labels,
        &mut d_frame[frame_range],
    );
    let mse_clip = mse(&student.clip_probs.data, &teacher.clip_probs.data, consistency_weight, &mut d_clip);
    let mse_frame = mse(&student.frame_probs.data, &teacher.frame_probs.data, consistency_weight, &mut d_frame);
    let total = bce_clip + bce_frame + consistency_weight * (mse_clip + mse_frame);
    if !total.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite loss (bce_clip {bce_clip}, bce_frame {bce_frame}, mse_clip {mse_clip}, mse_frame {mse_frame})"
        )));
    }
    Ok((
        LossParts { bce_clip, bce_frame, mse_clip, mse_frame, total },
        LossGrads {
            d_frame: Tensor::new(&[b, t_out, c], d_frame)?,
            d_clip: Tensor::new(&[b, c], d_clip)?,
        },
    ))
}
