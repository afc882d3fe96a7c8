use crate::nn::Tensor;
use crate::Result;

/// Keeps all-zero frames from dividing by zero.
pub const POOL_EPS: f64 = 1e-7;

/// Linear-softmax pooling over time: per class, `Σ p² / (Σ p + ε)`.
/// `[B, T, C]` to `[B, C]`.
pub fn linear_softmax_pool(frames: &Tensor) -> Result<Tensor> {
    let [batch, t_len, classes] = frames.dims::<3>("linear_softmax_pool input")?;
    let mut out = vec![0.0; batch * classes];
    for b in 0..batch {
        let (num, den) = sums(frames, b, t_len, classes);
        for c in 0..classes {
            out[b * classes + c] = num[c] / (den[c] + POOL_EPS);
        }
    }
    Tensor::new(&[batch, classes], out)
}

fn sums(frames: &Tensor, b: usize, t_len: usize, classes: usize) -> (Vec<f64>, Vec<f64>) {
    let mut num = vec![0.0; classes];
    let mut den = vec![0.0; classes];
    for t in 0..t_len {
        let row = &frames.data[(b * t_len + t) * classes..(b * t_len + t + 1) * classes];
        for c in 0..classes {
            num[c] += row[c] * row[c];
            den[c] += row[c];
        }
    }
    (num, den)
}

/// Gradient with respect to the frame probabilities.
pub fn linear_softmax_pool_backward(frames: &Tensor, d_clip: &Tensor) -> Result<Tensor> {
    let [batch, t_len, classes] = frames.dims::<3>("linear_softmax_pool input")?;
    let mut dx = vec![0.0; frames.len()];
    for b in 0..batch {
        let (num, den) = sums(frames, b, t_len, classes);
        for t in 0..t_len {
            let i = (b * t_len + t) * classes;
            for c in 0..classes {
                let d = den[c] + POOL_EPS;
                let p = frames.data[i + c];
                dx[i + c] = d_clip.data[b * classes + c] * (2.0 * p * d - num[c]) / (d * d);
            }
        }
    }
    Tensor::new(frames.shape(), dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(values: &[f64]) -> f64 {
        let t = Tensor::new(&[1, values.len(), 1], values.to_vec()).unwrap();
        linear_softmax_pool(&t).unwrap().data[0]
    }

    #[test]
    fn worked_values() {
        assert!((pool(&[0.3; 5]) - 0.3).abs() < 1e-6);
        assert!((pool(&[1.0, 0.0]) - 1.0).abs() < 1e-6);
        assert!((pool(&[0.8, 0.4]) - 0.8 / 1.2).abs() < 1e-6);
        assert_eq!(pool(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn raising_a_weak_frame_can_lower_the_clip() {
        // frames are weighted by themselves, so a weak frame dilutes a strong one
        assert!(pool(&[1.0, 0.5]) < pool(&[1.0, 0.0]));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let frames = Tensor::new(&[2, 3, 2], vec![0.1, 0.9, 0.5, 0.2, 0.7, 0.4, 0.3, 0.3, 0.8, 0.05, 0.6, 0.99]).unwrap();
        let d_clip = Tensor::new(&[2, 2], vec![1.0, -0.5, 0.25, 2.0]).unwrap();
        let dx = linear_softmax_pool_backward(&frames, &d_clip).unwrap();
        let loss = |f: &Tensor| -> f64 {
            linear_softmax_pool(f).unwrap().data.iter().zip(&d_clip.data).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        for i in 0..frames.len() {
            let mut plus = frames.clone();
            plus.data[i] += h;
            let mut minus = frames.clone();
            minus.data[i] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((numeric - dx.data[i]).abs() / dx.data[i].abs().max(1.0) < 1e-6);
        }
    }

    proptest::proptest! {
        #[test]
        fn clip_lies_between_frame_extremes(values in proptest::collection::vec(0.0f64..=1.0, 1..30)) {
            let clip = pool(&values);
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(0.0, f64::max);
            proptest::prop_assert!(clip >= lo - 1e-6 && clip <= hi + 1e-12);
        }

        #[test]
        fn permutation_invariant(values in proptest::collection::vec(0.0f64..=1.0, 1..30), seed in 0u64..1000) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = values.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            proptest::prop_assert!((pool(&values) - pool(&shuffled)).abs() < 1e-12);
        }

        #[test]
        fn scaling_frames_up_never_lowers_clip(
            values in proptest::collection::vec(0.0f64..=1.0, 1..30),
            k in 1.0f64..4.0,
        ) {
            let peak = values.iter().cloned().fold(0.0, f64::max);
            let k = if peak > 0.0 { k.min(1.0 / peak) } else { k };
            let scaled: Vec<f64> = values.iter().map(|v| v * k).collect();
            proptest::prop_assert!(pool(&scaled) >= pool(&values) - 1e-9);
        }
    }
}
