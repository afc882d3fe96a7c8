//! Gated recurrent unit, one direction at a time, plus the bidirectional
//! layer built from two directions.
//!
//! Gate rows are stacked as `[reset; update; candidate]` in `w_ih: [3H, D]`,
//! `w_hh: [3H, H]` and `bias: [3H]`:
//!
//! ```text
//! r  = σ(W_ir x + W_hr h + b_r)
//! z  = σ(W_iz x + W_hz h + b_z)
//! n  = tanh(W_in x + r ⊙ (W_hn h) + b_n)
//! h' = (1 - z) ⊙ n + z ⊙ h
//! ```
//!
//! The initial hidden state is zero.

use super::activation::sigmoid_scalar;
use super::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GruWeights<'a> {
    pub w_ih: &'a Tensor,
    pub w_hh: &'a Tensor,
    pub bias: &'a Tensor,
}

impl GruWeights<'_> {
    /// `(input width, hidden size)`.
    fn dims(&self) -> Result<(usize, usize)> {
        let [g3, d] = self.w_ih.dims::<2>("gru w_ih")?;
        let h = g3 / 3;
        if g3 != 3 * h || h == 0 {
            return Err(Error::Shape(format!("gru w_ih rows {g3} not a positive multiple of 3")));
        }
        if self.w_hh.shape() != [3 * h, h] || self.bias.shape() != [3 * h] {
            return Err(Error::Shape(format!(
                "gru weights inconsistent: w_ih {:?}, w_hh {:?}, bias {:?}",
                self.w_ih.shape(),
                self.w_hh.shape(),
                self.bias.shape()
            )));
        }
        Ok((d, h))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruGrads {
    pub w_ih: Vec<f64>,
    pub w_hh: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Per-step activations of one direction, each laid out `[B, T, H]` in
/// processing order.
#[derive(Debug, Clone)]
pub struct GruCache {
    reverse: bool,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// `W_hn h_prev`, needed for the reset-gate gradient.
    hn: Vec<f64>,
}

fn matvec_acc(m: &[f64], cols: usize, v: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(m.chunks(cols)) {
        *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += mᵀ v` for `m: [rows, cols]`.
fn matvec_t_acc(m: &[f64], cols: usize, v: &[f64], out: &mut [f64]) {
    for (row, &s) in m.chunks(cols).zip(v) {
        if s == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * s;
        }
    }
}

/// `m += u vᵀ`.
fn outer_acc(m: &mut [f64], u: &[f64], v: &[f64]) {
    let cols = v.len();
    for (row, &s) in m.chunks_mut(cols).zip(u) {
        for (o, b) in row.iter_mut().zip(v) {
            *o += s * b;
        }
    }
}

/// Runs one direction over `x: [B, T, D]`, returning `[B, T, H]` indexed by
/// the original time axis.
pub fn gru_direction(x: &Tensor, w: GruWeights<'_>, reverse: bool) -> Result<(Tensor, GruCache)> {
    let [batch, t_len, d_in] = x.dims::<3>("gru input")?;
    if t_len == 0 {
        return Err(Error::InvalidInput("gru input has no time steps".into()));
    }
    let (d, h) = w.dims()?;
    if d != d_in {
        return Err(Error::Shape(format!("gru expects input width {d}, got {d_in}")));
    }

    let total = batch * t_len * h;
    let mut out = vec![0.0; total];
    let mut cache = GruCache {
        reverse,
        h_prev: vec![0.0; total],
        r: vec![0.0; total],
        z: vec![0.0; total],
        n: vec![0.0; total],
        hn: vec![0.0; total],
    };
    let mut gi = vec![0.0; 3 * h];
    let mut gh = vec![0.0; 3 * h];
    let mut state = vec![0.0; h];

    for b in 0..batch {
        state.iter_mut().for_each(|v| *v = 0.0);
        for step in 0..t_len {
            let t = if reverse { t_len - 1 - step } else { step };
            let xt = &x.data[(b * t_len + t) * d..(b * t_len + t + 1) * d];
            gi.copy_from_slice(&w.bias.data);
            matvec_acc(&w.w_ih.data, d, xt, &mut gi);
            gh.iter_mut().for_each(|v| *v = 0.0);
            matvec_acc(&w.w_hh.data, h, &state, &mut gh);

            let slot = (b * t_len + step) * h;
            cache.h_prev[slot..slot + h].copy_from_slice(&state);
            for j in 0..h {
                let r = sigmoid_scalar(gi[j] + gh[j]);
                let z = sigmoid_scalar(gi[h + j] + gh[h + j]);
                let n = (gi[2 * h + j] + r * gh[2 * h + j]).tanh();
                cache.r[slot + j] = r;
                cache.z[slot + j] = z;
                cache.n[slot + j] = n;
                cache.hn[slot + j] = gh[2 * h + j];
                state[j] = (1.0 - z) * n + z * state[j];
            }
            out[(b * t_len + t) * h..(b * t_len + t + 1) * h].copy_from_slice(&state);
        }
    }
    Ok((Tensor::new(&[batch, t_len, h], out)?, cache))
}

/// Backpropagation through time for [`gru_direction`]. `dy` is indexed by
/// the original time axis.
pub fn gru_direction_backward(
    x: &Tensor,
    w: GruWeights<'_>,
    cache: &GruCache,
    dy: &Tensor,
) -> Result<(Tensor, GruGrads)> {
    let [batch, t_len, _] = x.dims::<3>("gru input")?;
    let (d, h) = w.dims()?;
    if dy.shape() != [batch, t_len, h] {
        return Err(Error::Shape(format!(
            "gru output gradient {:?}, expected {:?}",
            dy.shape(),
            [batch, t_len, h]
        )));
    }

    let mut dx = vec![0.0; x.len()];
    let mut grads = GruGrads {
        w_ih: vec![0.0; w.w_ih.len()],
        w_hh: vec![0.0; w.w_hh.len()],
        bias: vec![0.0; w.bias.len()],
    };
    let mut dh_next = vec![0.0; h];
    let mut da = vec![0.0; 3 * h];
    // pre-activation gradients of the hidden-side products: [r, z, r ⊙ n-part]
    let mut dgh = vec![0.0; 3 * h];

    for b in 0..batch {
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for step in (0..t_len).rev() {
            let t = if cache.reverse { t_len - 1 - step } else { step };
            let slot = (b * t_len + step) * h;
            let h_prev = &cache.h_prev[slot..slot + h];
            let dy_t = &dy.data[(b * t_len + t) * h..(b * t_len + t + 1) * h];

            for j in 0..h {
                let (r, z, n, hn) = (
                    cache.r[slot + j],
                    cache.z[slot + j],
                    cache.n[slot + j],
                    cache.hn[slot + j],
                );
                let dh = dy_t[j] + dh_next[j];
                let dn = dh * (1.0 - z);
                let dz = dh * (h_prev[j] - n);
                let dan = dn * (1.0 - n * n);
                let dar = dan * hn * r * (1.0 - r);
                let daz = dz * z * (1.0 - z);
                da[j] = dar;
                da[h + j] = daz;
                da[2 * h + j] = dan;
                dgh[j] = dar;
                dgh[h + j] = daz;
                dgh[2 * h + j] = dan * r;
                dh_next[j] = dh * z;
            }

            let xt = &x.data[(b * t_len + t) * d..(b * t_len + t + 1) * d];
            outer_acc(&mut grads.w_ih, &da, xt);
            outer_acc(&mut grads.w_hh, &dgh, h_prev);
            for (g, v) in grads.bias.iter_mut().zip(&da) {
                *g += v;
            }
            matvec_t_acc(&w.w_ih.data, d, &da, &mut dx[(b * t_len + t) * d..(b * t_len + t + 1) * d]);
            matvec_t_acc(&w.w_hh.data, h, &dgh, &mut dh_next);
        }
    }
    Ok((Tensor::new(x.shape(), dx)?, grads))
}

/// Cache of one bidirectional layer.
#[derive(Debug, Clone)]
pub struct BiGruLayerCache {
    forward: GruCache,
    backward: GruCache,
}

/// Forward and backward directions over `x: [B, T, D]`, concatenated to
/// `[B, T, 2H]` as `[forward | backward]`.
pub fn bigru_layer(x: &Tensor, fwd: GruWeights<'_>, bwd: GruWeights<'_>) -> Result<(Tensor, BiGruLayerCache)> {
    let (yf, cf) = gru_direction(x, fwd, false)?;
    let (yb, cb) = gru_direction(x, bwd, true)?;
    let [batch, t_len, h] = yf.dims::<3>("gru output")?;
    let mut out = Vec::with_capacity(2 * yf.len());
    for (a, b) in yf.data.chunks(h).zip(yb.data.chunks(h)) {
        out.extend_from_slice(a);
        out.extend_from_slice(b);
    }
    Ok((
        Tensor::new(&[batch, t_len, 2 * h], out)?,
        BiGruLayerCache {
            forward: cf,
            backward: cb,
        },
    ))
}

/// Returns `(dx, forward-direction grads, backward-direction grads)`.
pub fn bigru_layer_backward(
    x: &Tensor,
    fwd: GruWeights<'_>,
    bwd: GruWeights<'_>,
    cache: &BiGruLayerCache,
    dy: &Tensor,
) -> Result<(Tensor, GruGrads, GruGrads)> {
    let [batch, t_len, h2] = dy.dims::<3>("bigru output gradient")?;
    let h = h2 / 2;
    let mut dyf = Vec::with_capacity(batch * t_len * h);
    let mut dyb = Vec::with_capacity(batch * t_len * h);
    for row in dy.data.chunks(h2) {
        dyf.extend_from_slice(&row[..h]);
        dyb.extend_from_slice(&row[h..]);
    }
    let dyf = Tensor::new(&[batch, t_len, h], dyf)?;
    let dyb = Tensor::new(&[batch, t_len, h], dyb)?;
    let (mut dx, gf) = gru_direction_backward(x, fwd, &cache.forward, &dyf)?;
    let (dxb, gb) = gru_direction_backward(x, bwd, &cache.backward, &dyb)?;
    for (a, b) in dx.data.iter_mut().zip(&dxb.data) {
        *a += b;
    }
    Ok((dx, gf, gb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let (d, h) = (3, 4);
        let (wi, wh, b) = (Tensor::zeros(&[3 * h, d]), Tensor::zeros(&[3 * h, h]), Tensor::zeros(&[3 * h]));
        let w = GruWeights { w_ih: &wi, w_hh: &wh, bias: &b };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[2, 5, d], &mut rng);
        let (y, _) = bigru_layer(&x, w, w).unwrap();
        assert_eq!(y.shape(), &[2, 5, 2 * h]);
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reversing_time_and_swapping_directions_reverses_output() {
        let (d, h, t) = (2, 3, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fw = [random(&[3 * h, d], &mut rng), random(&[3 * h, h], &mut rng), random(&[3 * h], &mut rng)];
        let bw = [random(&[3 * h, d], &mut rng), random(&[3 * h, h], &mut rng), random(&[3 * h], &mut rng)];
        let wf = GruWeights { w_ih: &fw[0], w_hh: &fw[1], bias: &fw[2] };
        let wb = GruWeights { w_ih: &bw[0], w_hh: &bw[1], bias: &bw[2] };
        let x = random(&[1, t, d], &mut rng);
        let mut rev = Vec::new();
        for s in (0..t).rev() {
            rev.extend_from_slice(&x.data[s * d..(s + 1) * d]);
        }
        let x_rev = Tensor::new(&[1, t, d], rev).unwrap();

        let (y, _) = bigru_layer(&x, wf, wb).unwrap();
        let (y_rev, _) = bigru_layer(&x_rev, wb, wf).unwrap();
        for s in 0..t {
            let a = &y.data[s * 2 * h..(s + 1) * 2 * h];
            let b = &y_rev.data[(t - 1 - s) * 2 * h..(t - s) * 2 * h];
            // halves trade places along with the parameter blocks
            for j in 0..h {
                assert!((a[j] - b[h + j]).abs() < 1e-12);
                assert!((a[h + j] - b[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_sequence_is_invalid() {
        let (wi, wh, b) = (Tensor::zeros(&[3, 1]), Tensor::zeros(&[3, 1]), Tensor::zeros(&[3]));
        let w = GruWeights { w_ih: &wi, w_hh: &wh, bias: &b };
        let x = Tensor::zeros(&[1, 0, 1]);
        assert!(matches!(gru_direction(&x, w, false), Err(Error::InvalidInput(_))));
    }
}
