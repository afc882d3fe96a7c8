use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};

use super::Waveform;
use crate::{Error, Result};

/// Added to mel energies before taking the natural log.
pub const LOG_FLOOR: f64 = 1e-10;

/// A `T x F` matrix of log-mel energies (row-major, one row per frame).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMap {
    pub clip_id: String,
    pub n_frames: usize,
    pub n_mels: usize,
    /// Seconds between consecutive frames.
    pub hop_seconds: f64,
    pub values: Vec<f64>,
}

impl SpectralMap {
    pub fn new(clip_id: impl Into<String>, n_frames: usize, n_mels: usize, hop_seconds: f64, values: Vec<f64>) -> Result<Self> {
        if n_frames == 0 || n_mels == 0 {
            return Err(Error::Shape("spectral map needs at least one frame and one bin".into()));
        }
        if values.len() != n_frames * n_mels {
            return Err(Error::Shape(format!(
                "spectral map expects {} values, got {}",
                n_frames * n_mels,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("spectral map contains non-finite values".into()));
        }
        Ok(Self {
            clip_id: clip_id.into(),
            n_frames,
            n_mels,
            hop_seconds,
            values,
        })
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_mels..(t + 1) * self.n_mels]
    }

    pub fn get(&self, t: usize, f: usize) -> f64 {
        self.values[t * self.n_mels + f]
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank spanning 0 Hz to Nyquist, HTK mel scale, each
/// filter scaled to unit area (`2 / (f_hi - f_lo)`). Returned as
/// `n_mels x (n_fft/2 + 1)` row-major weights.
pub fn mel_filterbank(sample_rate: u32, n_fft: usize, n_mels: usize) -> Vec<f64> {
    let n_bins = n_fft / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz: Vec<f64> = (0..n_bins)
        .map(|k| k as f64 * sample_rate as f64 / n_fft as f64)
        .collect();

    let mut weights = vec![0.0; n_mels * n_bins];
    for m in 0..n_mels {
        let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (hi - lo);
        for (k, &f) in bin_hz.iter().enumerate() {
            let rising = (f - lo) / (centre - lo);
            let falling = (hi - f) / (hi - centre);
            let w = rising.min(falling).max(0.0);
            weights[m * n_bins + k] = w * norm;
        }
    }
    weights
}

/// Reflect-pads index `i` (which may be negative or past the end) into
/// `0..len`, mirroring around the edge samples without repeating them.
fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Centered STFT with a Hann window followed by a mel filterbank and a
/// natural log.
pub struct LogMelExtractor {
    sample_rate: u32,
    n_fft: usize,
    hop: usize,
    n_mels: usize,
    window: Vec<f64>,
    filterbank: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for LogMelExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LogMelExtractor")
            .field("sample_rate", &self.sample_rate)
            .field("n_fft", &self.n_fft)
            .field("hop", &self.hop)
            .field("n_mels", &self.n_mels)
            .finish()
    }
}

impl LogMelExtractor {
    pub fn new(sample_rate: u32, n_fft: usize, hop: usize, n_mels: usize) -> Result<Self> {
        if n_fft < 2 || hop == 0 || n_mels == 0 || sample_rate == 0 {
            return Err(Error::Config(format!(
                "invalid STFT setup: n_fft={n_fft}, hop={hop}, n_mels={n_mels}, rate={sample_rate}"
            )));
        }
        // periodic Hann
        let window = (0..n_fft)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n_fft as f64).cos())
            .collect();
        Ok(Self {
            sample_rate,
            n_fft,
            hop,
            n_mels,
            window,
            filterbank: mel_filterbank(sample_rate, n_fft, n_mels),
            fft: FftPlanner::new().plan_fft_forward(n_fft),
        })
    }

    /// 22.05 kHz, 2048-sample window, 363-sample hop, 128 mel bins.
    pub fn default_config() -> Self {
        Self::new(crate::SAMPLE_RATE, crate::N_FFT, crate::HOP_LENGTH, crate::N_MELS)
            .expect("default STFT configuration is valid")
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }

    /// Number of frames produced for a clip of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        len / self.hop + 1
    }

    pub fn extract(&self, w: &Waveform, clip_id: &str) -> Result<SpectralMap> {
        if w.sample_rate != self.sample_rate {
            return Err(Error::InvalidInput(format!(
                "expected {} Hz audio, got {} Hz",
                self.sample_rate, w.sample_rate
            )));
        }
        let len = w.len();
        if len < self.hop {
            return Err(Error::InvalidInput(format!(
                "clip of {len} samples is shorter than one hop ({})",
                self.hop
            )));
        }

        let n_frames = self.n_frames(len);
        let n_bins = self.n_fft / 2 + 1;
        let pad = (self.n_fft / 2) as isize;
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; n_bins];
        let mut values = Vec::with_capacity(n_frames * self.n_mels);

        for t in 0..n_frames {
            let start = (t * self.hop) as isize - pad;
            for (i, c) in buf.iter_mut().enumerate() {
                let s = w.samples[reflect_index(start + i as isize, len)];
                *c = Complex::new(s * self.window[i], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for m in 0..self.n_mels {
                let row = &self.filterbank[m * n_bins..(m + 1) * n_bins];
                let energy: f64 = row.iter().zip(&power).map(|(w, p)| w * p).sum();
                values.push((energy + LOG_FLOOR).ln());
            }
        }

        SpectralMap::new(clip_id, n_frames, self.n_mels, self.hop_seconds(), values)
    }
}

/// Log-mel spectrogram with an explicit framing configuration.
pub fn log_mel(w: &Waveform, n_fft: usize, hop: usize, n_mels: usize) -> Result<SpectralMap> {
    LogMelExtractor::new(w.sample_rate, n_fft, hop, n_mels)?.extract(w, "")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, n: usize) -> Waveform {
        let samples = (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / 22_050.0).sin())
            .collect();
        Waveform::new(samples, 22_050).unwrap()
    }

    #[test]
    fn ten_second_clip_has_608_frames() {
        let w = Waveform::new(vec![0.0; 220_500], 22_050).unwrap();
        let map = log_mel(&w, 2048, 363, 128).unwrap();
        assert_eq!(map.n_frames, 608);
        assert_eq!(map.n_mels, 128);
        assert!((map.hop_seconds - 363.0 / 22_050.0).abs() < 1e-15);
        assert!((map.hop_seconds - 0.016463).abs() < 1e-6);
    }

    #[test]
    fn frame_count_formula_is_exact() {
        let ex = LogMelExtractor::default_config();
        for len in [363, 364, 725, 726, 1024, 2048, 5000, 22_050] {
            let w = Waveform::new(vec![0.1; len], 22_050).unwrap();
            assert_eq!(ex.extract(&w, "x").unwrap().n_frames, len / 363 + 1, "len {len}");
        }
    }

    #[test]
    fn stationary_tone_has_constant_argmax() {
        let w = tone(1000.0, 22_050);
        let map = LogMelExtractor::default_config().extract(&w, "tone").unwrap();
        let argmax = |t: usize| {
            let row = map.frame(t);
            (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap()
        };
        let first = argmax(0);
        assert!((0..map.n_frames).all(|t| argmax(t) == first));
    }

    #[test]
    fn short_clip_is_rejected() {
        let w = Waveform::new(vec![0.1; 362], 22_050).unwrap();
        assert!(matches!(
            LogMelExtractor::default_config().extract(&w, "x"),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn silence_hits_the_log_floor() {
        let w = Waveform::new(vec![0.0; 4000], 22_050).unwrap();
        let map = LogMelExtractor::default_config().extract(&w, "x").unwrap();
        assert!(map.values.iter().all(|&v| (v - LOG_FLOOR.ln()).abs() < 1e-12));
    }

    #[test]
    fn filters_have_unit_area_in_hz() {
        let fb = mel_filterbank(22_050, 2048, 128);
        let n_bins = 1025;
        let df = 22_050.0 / 2048.0;
        // wide high-frequency filters are well sampled by the FFT grid
        for m in 100..128 {
            let area: f64 = fb[m * n_bins..(m + 1) * n_bins].iter().sum::<f64>() * df;
            assert!((area - 1.0).abs() < 0.02, "filter {m} area {area}");
        }
    }

    #[test]
    fn reflect_padding_mirrors_without_repeating_edges() {
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(-2, 5), 2);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(2, 5), 2);
        assert_eq!(reflect_index(-9, 5), 1);
    }
}
