use indexmap::IndexMap;

use crate::nn::ParamSet;
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam with bias correction. Only trainable entries of the [`ParamSet`]
/// are updated; their gradients are read from the tensors' grad buffers.
#[derive(Debug, Clone, Default)]
pub struct Adam {
    step: u64,
    moments: IndexMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet, lr: f64) -> Result<()> {
        for (name, p) in params.iter() {
            if !p.trainable {
                continue;
            }
            if let Some(g) = &p.tensor.grad {
                if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Numerical(format!(
                        "gradient of {name}[{i}] is {} at optimizer step {}",
                        g[i],
                        self.step + 1
                    )));
                }
            }
        }
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powf(self.step as f64);
        let c2 = 1.0 - ADAM_BETA2.powf(self.step as f64);
        for (name, p) in params.iter_mut() {
            if !p.trainable {
                continue;
            }
            let Some(grad) = &p.tensor.grad else { continue };
            let n = grad.len();
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            for (((w, &g), mi), vi) in p.tensor.data.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * g;
                *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * g * g;
                *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn single(value: f64, grad: f64) -> ParamSet {
        let mut p = ParamSet::new();
        let mut t = Tensor::filled(&[1], value);
        t.accumulate_grad(&[grad]);
        p.insert("w", t, true).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = single(1.5, 0.0);
        Adam::new().step(&mut p, 0.1).unwrap();
        assert_eq!(p.get("w").unwrap().data[0], 1.5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.02] {
            let mut p = single(0.0, g);
            Adam::new().step(&mut p, 0.001).unwrap();
            let w = p.get("w").unwrap().data[0];
            assert!((w.abs() - 0.001).abs() < 1e-9);
            assert_eq!(w.signum(), -g.signum());
        }
    }

    #[test]
    fn frozen_entries_are_untouched() {
        let mut p = single(0.0, 1.0);
        let mut rm = Tensor::filled(&[1], 2.0);
        rm.accumulate_grad(&[5.0]);
        p.insert("rm", rm, false).unwrap();
        Adam::new().step(&mut p, 0.1).unwrap();
        assert_eq!(p.get("rm").unwrap().data[0], 2.0);
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        let mut p = single(0.0, f64::NAN);
        let err = Adam::new().step(&mut p, 0.1).unwrap_err();
        assert!(matches!(err, Error::Numerical(ref m) if m.contains("w[0]")));
        assert_eq!(p.get("w").unwrap().data[0], 0.0);
    }

    #[test]
    fn identical_runs_are_identical() {
        let run = || {
            let mut p = single(0.3, 0.0);
            let mut opt = Adam::new();
            for k in 0..50 {
                p.zero_grads();
                let w = p.get("w").unwrap().data[0];
                p.get_mut("w").unwrap().accumulate_grad(&[2.0 * (w - 1.0) + 0.01 * k as f64]);
                opt.step(&mut p, 0.05).unwrap();
            }
            p.get("w").unwrap().data[0]
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }
}
