//! 3x3 convolution, stride 1, zero padding 1 on both axes.

use super::Tensor;
use crate::{Error, Result};

const K: usize = 3;

fn check_shapes(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<([usize; 4], usize)> {
    let [batch, c_in, t, f] = x.dims::<4>("conv2d input")?;
    let [c_out, w_in, kt, kf] = w.dims::<4>("conv2d weight")?;
    if w_in != c_in || kt != K || kf != K {
        return Err(Error::Shape(format!(
            "conv2d weight {:?} does not fit input with {c_in} channels and a 3x3 kernel",
            w.shape()
        )));
    }
    if b.shape() != [c_out] {
        return Err(Error::Shape(format!(
            "conv2d bias {:?}, expected [{c_out}]",
            b.shape()
        )));
    }
    Ok(([batch, c_in, t, f], c_out))
}

/// Adds the 3x3 cross-correlation of `src` with `taps` (zero padded) to
/// `dst`. Both planes are `t_len x f_len`, row-major.
fn correlate_into(dst: &mut [f64], src: &[f64], taps: &[f64], t_len: usize, f_len: usize) {
    for t in 0..t_len {
        let out = &mut dst[t * f_len..(t + 1) * f_len];
        for kt in 0..K {
            let s = t + kt;
            if s < 1 || s > t_len {
                continue;
            }
            let row = &src[(s - 1) * f_len..s * f_len];
            let (w0, w1, w2) = (taps[kt * K], taps[kt * K + 1], taps[kt * K + 2]);
            if f_len == 1 {
                out[0] += w1 * row[0];
                continue;
            }
            out[0] += w1 * row[0] + w2 * row[1];
            out[f_len - 1] += w0 * row[f_len - 2] + w1 * row[f_len - 1];
            let inner = &mut out[1..f_len - 1];
            let (left, mid, right) = (&row[..f_len - 2], &row[1..f_len - 1], &row[2..]);
            for (((o, a), b), c) in inner.iter_mut().zip(left).zip(mid).zip(right) {
                *o += w0 * a + w1 * b + w2 * c;
            }
        }
    }
}

/// Dot product with four independent accumulators so it vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `x: [B, C_in, T, F]`, `w: [C_out, C_in, 3, 3]`, `b: [C_out]` to
/// `[B, C_out, T, F]`.
pub fn conv2d(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let ([batch, c_in, t_len, f_len], c_out) = check_shapes(x, w, b)?;
    let plane = t_len * f_len;
    let mut out = vec![0.0; batch * c_out * plane];

    for n in 0..batch {
        for co in 0..c_out {
            let dst = &mut out[(n * c_out + co) * plane..(n * c_out + co + 1) * plane];
            dst.iter_mut().for_each(|v| *v = b.data[co]);
            for ci in 0..c_in {
                let src = &x.data[(n * c_in + ci) * plane..(n * c_in + ci + 1) * plane];
                let taps = &w.data[(co * c_in + ci) * K * K..(co * c_in + ci + 1) * K * K];
                correlate_into(dst, src, taps, t_len, f_len);
            }
        }
    }
    Tensor::new(&[batch, c_out, t_len, f_len], out)
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub fn conv2d_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let c_out = w.shape().first().copied().unwrap_or(0);
    let ([batch, c_in, t_len, f_len], _) = check_shapes(x, w, &Tensor::zeros(&[c_out]))?;
    if dy.shape() != [batch, c_out, t_len, f_len] {
        return Err(Error::Shape(format!(
            "conv2d output gradient {:?}, expected {:?}",
            dy.shape(),
            [batch, c_out, t_len, f_len]
        )));
    }
    let plane = t_len * f_len;
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; c_out];

    for n in 0..batch {
        for co in 0..c_out {
            let g = &dy.data[(n * c_out + co) * plane..(n * c_out + co + 1) * plane];
            db[co] += g.iter().sum::<f64>();
            for ci in 0..c_in {
                let base = (n * c_in + ci) * plane;
                let src = &x.data[base..base + plane];
                let widx = (co * c_in + ci) * K * K;

                // input gradient: correlation with the flipped kernel
                let mut flipped = [0.0; K * K];
                for (i, v) in flipped.iter_mut().enumerate() {
                    *v = w.data[widx + K * K - 1 - i];
                }
                correlate_into(&mut dx[base..base + plane], g, &flipped, t_len, f_len);

                for kt in 0..K {
                    for kf in 0..K {
                        let lo = 1usize.saturating_sub(kf);
                        let hi = (f_len + 1).saturating_sub(kf).min(f_len);
                        if hi <= lo {
                            continue;
                        }
                        let mut acc = 0.0;
                        for t in 0..t_len {
                            let s = t + kt;
                            if s < 1 || s > t_len {
                                continue;
                            }
                            let in_off = (s - 1) * f_len + lo + kf - 1;
                            acc += dot(&g[t * f_len + lo..t * f_len + hi], &src[in_off..in_off + (hi - lo)]);
                        }
                        dw[widx + kt * K + kf] += acc;
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(x.shape(), dx)?,
        Tensor::new(w.shape(), dw)?,
        Tensor::new(&[c_out], db)?,
    ))
}
