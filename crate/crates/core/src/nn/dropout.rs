use rand::{Rng, RngCore};

use super::{Mode, Tensor};
use crate::{Error, Result};

/// Inverted dropout. Returns the output and, in training mode, the
/// multiplicative mask (`0` or `1 / (1 - p)`) needed for the backward pass.
pub fn dropout(x: &Tensor, p: f64, mode: Mode, rng: &mut dyn RngCore) -> Result<(Tensor, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("dropout rate {p} outside [0, 1)")));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let data = x.data.iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((Tensor::new(x.shape(), data)?, Some(mask)))
}

pub fn dropout_backward(mask: Option<&[f64]>, dy: &Tensor) -> Tensor {
    match mask {
        None => dy.clone(),
        Some(m) => {
            let data = dy.data.iter().zip(m).map(|(g, k)| g * k).collect();
            Tensor::new(dy.shape(), data).expect("mask matches gradient")
        }
    }
}
