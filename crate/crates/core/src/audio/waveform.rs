use std::f64::consts::PI;

use crate::{Error, Result};

/// Mono audio samples at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Zero crossings of the sinc kernel kept on each side of the centre tap.
const SINC_ZEROS: usize = 32;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Polyphase windowed-sinc resampler.
///
/// The ratio `target / source` is reduced to `up / down`. Output sample `n`
/// sits at input position `n * down / up`; its fractional part takes one of
/// `up` values, so one Hann-windowed sinc filter is precomputed per phase.
/// The cutoff is the lower of the two Nyquist frequencies.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if w.is_empty() {
        return Err(Error::InvalidInput("cannot resample an empty waveform".into()));
    }
    if target_rate == 0 {
        return Err(Error::InvalidInput("target rate must be positive".into()));
    }
    if w.sample_rate == target_rate {
        return Ok(w.clone());
    }

    let g = gcd(w.sample_rate as u64, target_rate as u64);
    let up = (target_rate as u64 / g) as usize;
    let down = (w.sample_rate as u64 / g) as usize;

    // cutoff relative to the input Nyquist
    let cutoff = (up as f64 / down as f64).min(1.0);
    let half_width = (SINC_ZEROS as f64 / cutoff).ceil() as isize;
    let taps = (2 * half_width + 1) as usize;

    let mut bank = vec![0.0; up * taps];
    for phase in 0..up {
        let frac = phase as f64 / up as f64;
        let row = &mut bank[phase * taps..(phase + 1) * taps];
        for (j, tap) in row.iter_mut().enumerate() {
            // input index offset relative to floor(position)
            let k = j as isize - half_width;
            let dist = k as f64 - frac;
            let span = half_width as f64 + 1.0;
            if dist.abs() >= span {
                continue;
            }
            let window = 0.5 + 0.5 * (PI * dist / span).cos();
            *tap = cutoff * sinc(cutoff * dist) * window;
        }
    }

    let n_in = w.len();
    let n_out = (n_in * up).div_ceil(down);
    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out {
        let pos = n * down;
        let base = (pos / up) as isize;
        let phase = pos % up;
        let row = &bank[phase * taps..(phase + 1) * taps];
        let mut acc = 0.0;
        for (j, &h) in row.iter().enumerate() {
            let idx = base + j as isize - half_width;
            if idx >= 0 && (idx as usize) < n_in {
                acc += h * w.samples[idx as usize];
            }
        }
        out.push(acc);
    }

    Ok(Waveform {
        samples: out,
        sample_rate: target_rate,
    })
}

/// Scales the clip so its largest absolute sample is 1. Silent clips are
/// returned unchanged.
pub fn peak_normalize(w: &Waveform) -> Waveform {
    let peak = w.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    if peak == 0.0 {
        return w.clone();
    }
    Waveform {
        samples: w.samples.iter().map(|s| s / peak).collect(),
        sample_rate: w.sample_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn tone(freq: f64, rate: u32, n: usize) -> Waveform {
        let samples = (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / rate as f64).sin())
            .collect();
        Waveform::new(samples, rate).unwrap()
    }

    fn peak_bin(samples: &[f64]) -> usize {
        let mut buf: Vec<Complex<f64>> = samples.iter().map(|&s| Complex::new(s, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        (1..buf.len() / 2)
            .max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm()))
            .unwrap()
    }

    #[test]
    fn halving_rate_halves_count() {
        let w = tone(440.0, 44_100, 44_100);
        let r = resample(&w, 22_050).unwrap();
        assert_eq!(r.sample_rate, 22_050);
        assert_eq!(r.len(), 22_050);
    }

    #[test]
    fn same_rate_is_identity() {
        let w = tone(440.0, 22_050, 1000);
        assert_eq!(resample(&w, 22_050).unwrap(), w);
    }

    #[test]
    fn upsampled_tone_keeps_its_frequency() {
        let w = tone(440.0, 16_000, 16_000);
        let r = resample(&w, 22_050).unwrap();
        assert_eq!(r.len(), 22_050);
        // one second of audio: FFT bin k is k Hz
        let bin = peak_bin(&r.samples);
        assert!((bin as i64 - 440).abs() <= 1, "peak at {bin} Hz");
    }

    #[test]
    fn downsampled_tone_keeps_its_frequency() {
        let w = tone(1000.0, 44_100, 44_100);
        let r = resample(&w, 22_050).unwrap();
        let bin = peak_bin(&r.samples);
        assert!((bin as i64 - 1000).abs() <= 1);
    }

    #[test]
    fn double_resample_matches_single() {
        let w = tone(300.0, 16_000, 4000);
        let once = resample(&w, 22_050).unwrap();
        let twice = resample(&once, 22_050).unwrap();
        let rms = (once
            .samples
            .iter()
            .zip(&twice.samples)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / once.len() as f64)
            .sqrt();
        assert!(rms < 1e-6);
    }

    #[test]
    fn empty_input_is_rejected() {
        let w = Waveform {
            samples: vec![],
            sample_rate: 44_100,
        };
        assert!(matches!(resample(&w, 22_050), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn duration_is_preserved() {
        let w = tone(200.0, 44_100, 12_345);
        let r = resample(&w, 22_050).unwrap();
        assert!((r.duration_seconds() - w.duration_seconds()).abs() <= 1.0 / 22_050.0);
    }

    #[test]
    fn peak_normalize_examples() {
        let w = Waveform::new(vec![0.5, -0.25], 10).unwrap();
        assert_eq!(peak_normalize(&w).samples, vec![1.0, -0.5]);
        let w = Waveform::new(vec![-2.0, 1.0], 10).unwrap();
        assert_eq!(peak_normalize(&w).samples, vec![-1.0, 0.5]);
        let w = Waveform::new(vec![0.0; 4], 10).unwrap();
        assert_eq!(peak_normalize(&w).samples, vec![0.0; 4]);
    }

    #[test]
    fn rejects_non_finite_samples() {
        assert!(Waveform::new(vec![0.0, f64::NAN], 10).is_err());
        assert!(Waveform::new(vec![0.0], 0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn peak_normalize_is_idempotent(samples in proptest::collection::vec(-10.0f64..10.0, 1..64)) {
            let w = Waveform::new(samples, 8000).unwrap();
            let once = peak_normalize(&w);
            let twice = peak_normalize(&once);
            for (a, b) in once.samples.iter().zip(&twice.samples) {
                proptest::prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
