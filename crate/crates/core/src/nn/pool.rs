use super::Tensor;
use crate::{Error, Result};

fn out_extent(len: usize, kernel: usize, stride: usize, axis: &str) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::Shape(format!("avg_pool {axis}: kernel and stride must be positive")));
    }
    if kernel > len {
        return Err(Error::Shape(format!(
            "avg_pool {axis}: kernel {kernel} exceeds extent {len}"
        )));
    }
    Ok((len - kernel) / stride + 1)
}

/// Average pooling over the last two axes of `[B, C, T, F]`. Windows that
/// would run past the end are dropped.
pub fn avg_pool(x: &Tensor, kernel: (usize, usize), stride: (usize, usize)) -> Result<Tensor> {
    let [batch, channels, t_len, f_len] = x.dims::<4>("avg_pool input")?;
    let t_out = out_extent(t_len, kernel.0, stride.0, "time")?;
    let f_out = out_extent(f_len, kernel.1, stride.1, "frequency")?;
    let scale = 1.0 / (kernel.0 * kernel.1) as f64;
    let mut out = vec![0.0; batch * channels * t_out * f_out];

    for (plane_idx, dst) in out.chunks_mut(t_out * f_out).enumerate() {
        let src = &x.data[plane_idx * t_len * f_len..(plane_idx + 1) * t_len * f_len];
        for to in 0..t_out {
            let row = &mut dst[to * f_out..(to + 1) * f_out];
            for dt in 0..kernel.0 {
                let s = &src[(to * stride.0 + dt) * f_len..(to * stride.0 + dt + 1) * f_len];
                for (fo, acc) in row.iter_mut().enumerate() {
                    let start = fo * stride.1;
                    *acc += s[start..start + kernel.1].iter().sum::<f64>();
                }
            }
            row.iter_mut().for_each(|v| *v *= scale);
        }
    }
    Tensor::new(&[batch, channels, t_out, f_out], out)
}

/// Spreads each output gradient evenly over its window.
pub fn avg_pool_backward(
    input_shape: &[usize],
    kernel: (usize, usize),
    stride: (usize, usize),
    dy: &Tensor,
) -> Result<Tensor> {
    let [_, _, t_len, f_len]: [usize; 4] = input_shape
        .try_into()
        .map_err(|_| Error::Shape("avg_pool backward: input must be rank 4".into()))?;
    let [_, _, t_out, f_out] = dy.dims::<4>("avg_pool output gradient")?;
    let scale = 1.0 / (kernel.0 * kernel.1) as f64;
    let mut dx = vec![0.0; input_shape.iter().product()];

    for (plane_idx, g) in dy.data.chunks(t_out * f_out).enumerate() {
        let dst = &mut dx[plane_idx * t_len * f_len..(plane_idx + 1) * t_len * f_len];
        for to in 0..t_out {
            for dt in 0..kernel.0 {
                let row = &mut dst[(to * stride.0 + dt) * f_len..(to * stride.0 + dt + 1) * f_len];
                for fo in 0..f_out {
                    let gv = g[to * f_out + fo] * scale;
                    let start = fo * stride.1;
                    row[start..start + kernel.1].iter_mut().for_each(|v| *v += gv);
                }
            }
        }
    }
    Tensor::new(input_shape, dx)
}
