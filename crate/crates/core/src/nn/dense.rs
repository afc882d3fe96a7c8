use super::Tensor;
use crate::{Error, Result};

/// Affine map over the last axis: `[..., D]` with `w: [K, D]`, `b: [K]`
/// to `[..., K]`.
pub fn dense(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [k, d] = w.dims::<2>("dense weight")?;
    let last = x.shape().last().copied().unwrap_or(0);
    if last != d || b.shape() != [k] {
        return Err(Error::Shape(format!(
            "dense: input {:?}, weight {:?}, bias {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let rows = x.len() / d;
    let mut out = Vec::with_capacity(rows * k);
    for row in x.data.chunks(d) {
        for (wr, bias) in w.data.chunks(d).zip(&b.data) {
            out.push(bias + wr.iter().zip(row).map(|(a, b)| a * b).sum::<f64>());
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = k;
    Tensor::new(&shape, out)
}

/// Returns `(dx, dw, db)`.
pub fn dense_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let [k, d] = w.dims::<2>("dense weight")?;
    if dy.len() * d != x.len() * k {
        return Err(Error::Shape(format!(
            "dense backward: gradient {:?} does not match input {:?}",
            dy.shape(),
            x.shape()
        )));
    }
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; k];
    for ((xr, gr), dxr) in x.data.chunks(d).zip(dy.data.chunks(k)).zip(dx.chunks_mut(d)) {
        for (j, &g) in gr.iter().enumerate() {
            db[j] += g;
            let wr = &w.data[j * d..(j + 1) * d];
            let dwr = &mut dw[j * d..(j + 1) * d];
            for i in 0..d {
                dwr[i] += g * xr[i];
                dxr[i] += g * wr[i];
            }
        }
    }
    Ok((
        Tensor::new(x.shape(), dx)?,
        Tensor::new(w.shape(), dw)?,
        Tensor::new(&[k], db)?,
    ))
}
