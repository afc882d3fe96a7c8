use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::LabeledBatch;
use crate::{Error, Result};

/// Zeroed frame and bin ranges of one spectrogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSpans {
    pub time: Range<usize>,
    pub freq: Range<usize>,
}

/// Draws one time mask of length `U{0..=time_max}` and one frequency mask
/// of length `U{0..=freq_max}` at uniform positions.
pub fn draw_masks<R: Rng + ?Sized>(t_len: usize, f_len: usize, time_max: usize, freq_max: usize, rng: &mut R) -> MaskSpans {
    let mut span = |extent: usize, max: usize| {
        let len = rng.random_range(0..=max.min(extent));
        let start = rng.random_range(0..=extent - len);
        start..start + len
    };
    let time = span(t_len, time_max);
    let freq = span(f_len, freq_max);
    MaskSpans { time, freq }
}

/// Zeroes the masked rows and columns of a row-major `t_len x f_len` plane.
pub fn apply_masks(plane: &mut [f64], f_len: usize, spans: &MaskSpans) {
    for (t, row) in plane.chunks_exact_mut(f_len).enumerate() {
        if spans.time.contains(&t) {
            row.iter_mut().for_each(|v| *v = 0.0);
        } else {
            row[spans.freq.clone()].iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

pub fn time_freq_mask<R: Rng + ?Sized>(
    plane: &mut [f64],
    t_len: usize,
    f_len: usize,
    time_max: usize,
    freq_max: usize,
    rng: &mut R,
) -> MaskSpans {
    let spans = draw_masks(t_len, f_len, time_max, freq_max, rng);
    apply_masks(plane, f_len, &spans);
    spans
}

/// Mixing weight and per-subset partner permutations.
#[derive(Debug, Clone, PartialEq)]
pub struct MixupDraw {
    pub lambda: f64,
    pub weak: Vec<usize>,
    pub strong: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

/// Row `i` of each subset becomes `lambda * row_i + (1 - lambda) *
/// row_perm(i)` of the same subset. Labels are mixed alongside features;
/// unlabeled rows only mix features.
pub fn mixup_with(batch: &mut LabeledBatch, draw: &MixupDraw) -> Result<()> {
    let (nw, ns, nu) = (batch.n_weak, batch.n_strong, batch.n_unlabeled);
    if draw.weak.len() != nw || draw.strong.len() != ns || draw.unlabeled.len() != nu {
        return Err(Error::Shape("mixup permutations do not match the batch subsets".into()));
    }
    let (l, r) = (draw.lambda, 1.0 - draw.lambda);
    let mix_rows = |data: &mut Vec<f64>, width: usize, offset: usize, perm: &[usize]| {
        let orig = data[offset * width..(offset + perm.len()) * width].to_vec();
        for (i, &j) in perm.iter().enumerate() {
            let dst = &mut data[(offset + i) * width..(offset + i + 1) * width];
            let (a, b) = (&orig[i * width..(i + 1) * width], &orig[j * width..(j + 1) * width]);
            for ((d, x), y) in dst.iter_mut().zip(a).zip(b) {
                *d = l * x + r * y;
            }
        }
    };
    let n = batch.len();
    let width = if n == 0 { 0 } else { batch.features.len() / n };
    mix_rows(&mut batch.features.data, width, 0, &draw.weak);
    mix_rows(&mut batch.features.data, width, nw, &draw.strong);
    mix_rows(&mut batch.features.data, width, nw + ns, &draw.unlabeled);
    if nw > 0 {
        let c = batch.weak_labels.len() / nw;
        mix_rows(&mut batch.weak_labels, c, 0, &draw.weak);
    }
    if ns > 0 {
        let w = batch.strong_labels.len() / ns;
        mix_rows(&mut batch.strong_labels, w, 0, &draw.strong);
    }
    Ok(())
}

/// With probability `prob`, mixes the batch with `lambda ~ Beta(alpha,
/// alpha)`. Returns the draw that was applied.
pub fn mixup<R: Rng + ?Sized>(batch: &mut LabeledBatch, rng: &mut R, prob: f64, alpha: f64) -> Result<Option<MixupDraw>> {
    if rng.random::<f64>() >= prob {
        return Ok(None);
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::Config(format!("mixup alpha {alpha}: {e}")))?;
    let lambda = beta.sample(rng);
    let mut perm = |n: usize| {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(rng);
        p
    };
    let draw = MixupDraw {
        lambda,
        weak: perm(batch.n_weak),
        strong: perm(batch.n_strong),
        unlabeled: perm(batch.n_unlabeled),
    };
    mixup_with(batch, &draw)?;
    Ok(Some(draw))
}
