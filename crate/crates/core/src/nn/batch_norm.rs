//! Per-channel batch normalization over `(B, T, F)`.

use super::Tensor;
use crate::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
/// Weight of the current batch in the running-statistics update.
pub const BN_MOMENTUM: f64 = 0.1;

/// Values saved by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub x_hat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

fn check(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<[usize; 4]> {
    let dims = x.dims::<4>("batch_norm input")?;
    let c = dims[1];
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::Shape(format!(
            "batch_norm affine parameters {:?}/{:?}, expected [{c}]",
            gamma.shape(),
            beta.shape()
        )));
    }
    Ok(dims)
}

/// Training mode: normalizes with batch statistics and folds them into the
/// running mean and (unbiased) variance.
pub fn batch_norm_train(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &mut Tensor,
    running_var: &mut Tensor,
) -> Result<(Tensor, BatchNormCache)> {
    let [batch, channels, t, f] = check(x, gamma, beta)?;
    let plane = t * f;
    let count = (batch * plane) as f64;
    let mut x_hat = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; channels];

    for c in 0..channels {
        let planes = || (0..batch).map(move |n| (n * channels + c) * plane);
        let mean = planes().map(|o| x.data[o..o + plane].iter().sum::<f64>()).sum::<f64>() / count;
        let var = planes()
            .map(|o| x.data[o..o + plane].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>())
            .sum::<f64>()
            / count;
        let istd = 1.0 / (var + BN_EPS).sqrt();
        inv_std[c] = istd;
        let (g, b) = (gamma.data[c], beta.data[c]);
        for o in planes() {
            for i in o..o + plane {
                let xh = (x.data[i] - mean) * istd;
                x_hat[i] = xh;
                out[i] = g * xh + b;
            }
        }
        let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
        running_mean.data[c] = (1.0 - BN_MOMENTUM) * running_mean.data[c] + BN_MOMENTUM * mean;
        running_var.data[c] = (1.0 - BN_MOMENTUM) * running_var.data[c] + BN_MOMENTUM * unbiased;
    }
    Ok((Tensor::new(x.shape(), out)?, BatchNormCache { x_hat, inv_std }))
}

/// Evaluation mode: normalizes with the running statistics.
pub fn batch_norm_eval(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
) -> Result<Tensor> {
    let [batch, channels, t, f] = check(x, gamma, beta)?;
    let plane = t * f;
    let mut out = x.data.clone();
    for n in 0..batch {
        for c in 0..channels {
            let scale = gamma.data[c] / (running_var.data[c] + BN_EPS).sqrt();
            let shift = beta.data[c] - running_mean.data[c] * scale;
            let o = (n * channels + c) * plane;
            out[o..o + plane].iter_mut().for_each(|v| *v = *v * scale + shift);
        }
    }
    Tensor::new(x.shape(), out)
}

/// Returns `(dx, dgamma, dbeta)` for a training-mode forward pass.
pub fn batch_norm_backward(
    cache: &BatchNormCache,
    gamma: &Tensor,
    dy: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let [batch, channels, t, f] = dy.dims::<4>("batch_norm output gradient")?;
    if cache.x_hat.len() != dy.len() || gamma.shape() != [channels] {
        return Err(Error::Shape("batch_norm backward: cache does not match gradient".into()));
    }
    let plane = t * f;
    let count = (batch * plane) as f64;
    let mut dx = vec![0.0; dy.len()];
    let mut dgamma = vec![0.0; channels];
    let mut dbeta = vec![0.0; channels];

    for c in 0..channels {
        let offsets: Vec<usize> = (0..batch).map(|n| (n * channels + c) * plane).collect();
        let (mut sum_dy, mut sum_dy_xh) = (0.0, 0.0);
        for &o in &offsets {
            for i in o..o + plane {
                sum_dy += dy.data[i];
                sum_dy_xh += dy.data[i] * cache.x_hat[i];
            }
        }
        dgamma[c] = sum_dy_xh;
        dbeta[c] = sum_dy;
        let k = gamma.data[c] * cache.inv_std[c] / count;
        for &o in &offsets {
            for i in o..o + plane {
                dx[i] = k * (count * dy.data[i] - sum_dy - cache.x_hat[i] * sum_dy_xh);
            }
        }
    }
    Ok((
        Tensor::new(dy.shape(), dx)?,
        Tensor::new(&[channels], dgamma)?,
        Tensor::new(&[channels], dbeta)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_affine(c: usize) -> (Tensor, Tensor, Tensor, Tensor) {
        (
            Tensor::filled(&[c], 1.0),
            Tensor::zeros(&[c]),
            Tensor::zeros(&[c]),
            Tensor::filled(&[c], 1.0),
        )
    }

    #[test]
    fn standardized_channel_is_unchanged() {
        let x = Tensor::new(&[2, 1, 1, 1], vec![-1.0, 1.0]).unwrap();
        let (g, b, mut rm, mut rv) = unit_affine(1);
        let (y, _) = batch_norm_train(&x, &g, &b, &mut rm, &mut rv).unwrap();
        for (a, e) in y.data.iter().zip(&x.data) {
            // eps shrinks the output by ~5e-6
            assert!((a - e).abs() < 1e-5);
        }
    }

    #[test]
    fn affine_maps_plus_minus_one_to_one_and_five() {
        let x = Tensor::new(&[2, 1, 1, 1], vec![-1.0, 1.0]).unwrap();
        let g = Tensor::new(&[1], vec![2.0]).unwrap();
        let b = Tensor::new(&[1], vec![3.0]).unwrap();
        let (mut rm, mut rv) = (Tensor::zeros(&[1]), Tensor::filled(&[1], 1.0));
        let (y, _) = batch_norm_train(&x, &g, &b, &mut rm, &mut rv).unwrap();
        assert!((y.data[0] - 1.0).abs() < 1e-4);
        assert!((y.data[1] - 5.0).abs() < 1e-4);
    }

    #[test]
    fn training_output_is_standardized_per_channel() {
        let x = Tensor::new(&[2, 3, 4, 4], (0..96).map(|v| ((v * 31) % 17) as f64 * 0.3 + (v / 32) as f64).collect()).unwrap();
        let (g, b, mut rm, mut rv) = unit_affine(3);
        let (y, _) = batch_norm_train(&x, &g, &b, &mut rm, &mut rv).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = (0..2).flat_map(|n| y.data[(n * 3 + c) * 16..(n * 3 + c + 1) * 16].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / 32.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 32.0;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-5, "var {var}");
        }
    }

    #[test]
    fn eval_before_training_uses_initial_stats() {
        let x = Tensor::new(&[1, 1, 1, 2], vec![3.0, -2.0]).unwrap();
        let (g, b, rm, rv) = unit_affine(1);
        let y = batch_norm_eval(&x, &g, &b, &rm, &rv).unwrap();
        for (a, e) in y.data.iter().zip(&x.data) {
            assert!((a - e).abs() < 1e-4);
        }
    }

    #[test]
    fn running_stats_follow_ema() {
        let x = Tensor::new(&[1, 1, 1, 2], vec![1.0, 3.0]).unwrap();
        let (g, b, mut rm, mut rv) = unit_affine(1);
        batch_norm_train(&x, &g, &b, &mut rm, &mut rv).unwrap();
        assert!((rm.data[0] - 0.2).abs() < 1e-12);
        // unbiased variance of {1,3} is 2
        assert!((rv.data[0] - (0.9 + 0.2)).abs() < 1e-12);
    }
}
