use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, StrongRow, WeakRow};
use crate::audio::{write_wav_i16, Waveform};
use crate::postprocess::EventRecord;
use crate::psds::{ClipTruth, GroundTruth};
use crate::{Error, Result};

/// Spectral shape of a synthetic sound class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceKind {
    Tone { freq_hz: f64 },
    NoiseBand { low_hz: f64, high_hz: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSource {
    pub class: String,
    #[serde(flatten)]
    pub kind: SourceKind,
}

/// Parameters of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_weak: usize,
    pub n_strong: usize,
    pub n_unlabeled: usize,
    pub clip_seconds: f64,
    pub sample_rate: u32,
    pub vocabulary: Vec<String>,
    /// Classes that actually occur, with their archetypes.
    pub sources: Vec<SynthSource>,
    /// Inclusive range of events per clip.
    pub events_per_clip: (usize, usize),
    pub event_seconds: (f64, f64),
    pub snr_db: (f64, f64),
}

const VOCABULARY: [&str; 10] = [
    "Alarm_bell_ringing",
    "Blender",
    "Cat",
    "Dishes",
    "Dog",
    "Electric_shaver_toothbrush",
    "Frying",
    "Running_water",
    "Speech",
    "Vacuum_cleaner",
];

/// One archetype per vocabulary class, in disjoint frequency bands.
fn default_sources() -> Vec<SynthSource> {
    use SourceKind::*;
    let kinds = [
        ("Vacuum_cleaner", NoiseBand { low_hz: 150.0, high_hz: 300.0 }),
        ("Dog", Tone { freq_hz: 450.0 }),
        ("Cat", Tone { freq_hz: 700.0 }),
        ("Speech", NoiseBand { low_hz: 1000.0, high_hz: 1400.0 }),
        ("Alarm_bell_ringing", Tone { freq_hz: 2000.0 }),
        ("Electric_shaver_toothbrush", Tone { freq_hz: 2800.0 }),
        ("Frying", NoiseBand { low_hz: 3500.0, high_hz: 4200.0 }),
        ("Blender", NoiseBand { low_hz: 4800.0, high_hz: 5500.0 }),
        ("Running_water", NoiseBand { low_hz: 6000.0, high_hz: 7000.0 }),
        ("Dishes", Tone { freq_hz: 7500.0 }),
    ];
    kinds.into_iter().map(|(c, kind)| SynthSource { class: c.into(), kind }).collect()
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_weak: 20,
            n_strong: 20,
            n_unlabeled: 40,
            clip_seconds: 10.0,
            sample_rate: 16_000,
            vocabulary: VOCABULARY.map(String::from).to_vec(),
            sources: default_sources(),
            events_per_clip: (1, 3),
            event_seconds: (2.5, 5.0),
            snr_db: (10.0, 20.0),
        }
    }
}

impl SynthSpec {
    /// Two well separated classes (a low noise band and a mid tone) over
    /// the full ten-class vocabulary.
    pub fn two_class(seed: u64) -> Self {
        let sources = default_sources()
            .into_iter()
            .filter(|s| s.class == "Vacuum_cleaner" || s.class == "Frying")
            .collect();
        Self { seed, sources, events_per_clip: (1, 2), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sources.is_empty() {
            return bad("synthetic corpus needs at least one source".into());
        }
        for s in &self.sources {
            if !self.vocabulary.contains(&s.class) {
                return bad(format!("source class {:?} is not in the vocabulary", s.class));
            }
            let nyquist = f64::from(self.sample_rate) / 2.0;
            let ok = match s.kind {
                SourceKind::Tone { freq_hz } => freq_hz > 0.0 && freq_hz < nyquist,
                SourceKind::NoiseBand { low_hz, high_hz } => low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist,
            };
            if !ok {
                return bad(format!("source {:?} is outside (0, {nyquist}) Hz", s.class));
            }
        }
        let (lo, hi) = self.event_seconds;
        if !(lo > 0.0 && lo <= hi && hi <= self.clip_seconds) {
            return bad(format!("event lengths {lo}..{hi} do not fit {} s clips", self.clip_seconds));
        }
        if self.events_per_clip.0 == 0 || self.events_per_clip.0 > self.events_per_clip.1 {
            return bad(format!("bad events per clip range {:?}", self.events_per_clip));
        }
        if self.snr_db.0 > self.snr_db.1 {
            return bad(format!("bad SNR range {:?}", self.snr_db));
        }
        Ok(())
    }
}

/// Files and annotations produced by [`synth_dataset`].
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub manifest: DatasetManifest,
    pub ground_truth: GroundTruth,
    /// `dataset.toml`
    pub index: PathBuf,
    /// Events of every clip, in the detection file format.
    pub groundtruth_path: PathBuf,
    pub durations_path: PathBuf,
}

const BACKGROUND_STD: f64 = 0.02;
const FADE_SECONDS: f64 = 0.02;
const PARTIALS: usize = 24;
/// Minimum silence between two events of the same class.
const SAME_CLASS_GAP: f64 = 0.5;

struct Placed {
    source: usize,
    onset: f64,
    offset: f64,
}

fn place_events(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Placed> {
    let n = rng.random_range(spec.events_per_clip.0..=spec.events_per_clip.1);
    let mut out: Vec<Placed> = Vec::new();
    for _ in 0..n {
        for _attempt in 0..50 {
            let source = rng.random_range(0..spec.sources.len());
            let dur = rng.random_range(spec.event_seconds.0..=spec.event_seconds.1);
            let onset = (rng.random_range(0.0..=spec.clip_seconds - dur) * 1000.0).round() / 1000.0;
            let offset = ((onset + dur) * 1000.0).round() / 1000.0;
            let offset = offset.min(spec.clip_seconds);
            let clash = out
                .iter()
                .any(|p| p.source == source && onset < p.offset + SAME_CLASS_GAP && p.onset < offset + SAME_CLASS_GAP);
            if !clash && onset < offset {
                out.push(Placed { source, onset, offset });
                break;
            }
        }
    }
    out.sort_by(|a, b| a.onset.total_cmp(&b.onset));
    out
}

fn render(spec: &SynthSpec, events: &[Placed], rng: &mut ChaCha8Rng) -> Waveform {
    let sr = f64::from(spec.sample_rate);
    let n = (spec.clip_seconds * sr).round() as usize;
    let noise = Normal::new(0.0, BACKGROUND_STD).expect("valid normal");
    let mut x: Vec<f64> = (0..n).map(|_| noise.sample(rng)).collect();
    for e in events {
        let snr = rng.random_range(spec.snr_db.0..=spec.snr_db.1);
        let rms = BACKGROUND_STD * 10f64.powf(snr / 20.0);
        let partials: Vec<(f64, f64, f64)> = match spec.sources[e.source].kind {
            SourceKind::Tone { freq_hz } => vec![(freq_hz, rng.random_range(0.0..2.0 * PI), rms * 2f64.sqrt())],
            SourceKind::NoiseBand { low_hz, high_hz } => {
                let amp = rms / (PARTIALS as f64 / 2.0).sqrt();
                (0..PARTIALS)
                    .map(|_| (rng.random_range(low_hz..high_hz), rng.random_range(0.0..2.0 * PI), amp))
                    .collect()
            }
        };
        let (start, end) = ((e.onset * sr).round() as usize, ((e.offset * sr).round() as usize).min(n));
        let fade = (FADE_SECONDS * sr) as usize;
        for (k, s) in x[start..end].iter_mut().enumerate() {
            let t = k as f64 / sr;
            let edge = k.min(end - start - 1 - k);
            let gain = if edge < fade { 0.5 - 0.5 * (PI * edge as f64 / fade as f64).cos() } else { 1.0 };
            *s += gain * partials.iter().map(|&(f, ph, a)| a * (2.0 * PI * f * t + ph).sin()).sum::<f64>();
        }
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= 0.9 / peak);
    }
    Waveform { samples: x, sample_rate: spec.sample_rate }
}

/// Generates the corpus under `out`: WAVE files in `audio/`, the manifest
/// files, and `groundtruth.tsv` / `durations.tsv` covering every clip.
/// The same spec always produces byte-identical files.
pub fn synth_dataset(spec: &SynthSpec, out: &Path) -> Result<SynthOutput> {
    spec.validate()?;
    let audio = out.join("audio");
    std::fs::create_dir_all(&audio).map_err(|e| Error::io(&audio, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let class_id = |name: &str| spec.vocabulary.iter().position(|c| c == name).expect("validated");
    let mut manifest = DatasetManifest {
        classes: spec.vocabulary.clone(),
        weak: Vec::new(),
        strong: Vec::new(),
        unlabeled: Vec::new(),
        audio_dir: PathBuf::from("audio"),
    };
    let mut clips = BTreeMap::new();
    let mut gt_text = String::from("filename\tonset\toffset\tevent_label\n");
    let mut dur_text = String::from("filename\tduration\n");

    for (pool, count) in [("weak", spec.n_weak), ("strong", spec.n_strong), ("unlabeled", spec.n_unlabeled)] {
        for i in 0..count {
            let clip = format!("{pool}_{i:03}.wav");
            let placed = place_events(spec, &mut rng);
            let wave = render(spec, &placed, &mut rng);
            write_wav_i16(&audio.join(&clip), &wave)?;

            let mut events = Vec::with_capacity(placed.len());
            for p in &placed {
                let name = &spec.sources[p.source].class;
                events.push(EventRecord::new(class_id(name), p.onset, p.offset)?);
                writeln!(gt_text, "{clip}\t{}\t{}\t{name}", p.onset, p.offset).unwrap();
            }
            writeln!(dur_text, "{clip}\t{}", spec.clip_seconds).unwrap();
            match pool {
                "weak" => {
                    let mut labels: Vec<String> = placed.iter().map(|p| spec.sources[p.source].class.clone()).collect();
                    labels.sort_by_key(|l| class_id(l));
                    labels.dedup();
                    manifest.weak.push(WeakRow { clip: clip.clone(), labels });
                }
                "strong" => manifest.strong.extend(placed.iter().map(|p| StrongRow {
                    clip: clip.clone(),
                    onset: p.onset,
                    offset: p.offset,
                    label: spec.sources[p.source].class.clone(),
                })),
                _ => manifest.unlabeled.push(clip.clone()),
            }
            clips.insert(clip, ClipTruth { duration: spec.clip_seconds, events });
        }
    }

    let index = manifest.write(out)?;
    manifest.audio_dir = audio;
    let groundtruth_path = out.join("groundtruth.tsv");
    let durations_path = out.join("durations.tsv");
    std::fs::write(&groundtruth_path, gt_text).map_err(|e| Error::io(&groundtruth_path, e))?;
    std::fs::write(&durations_path, dur_text).map_err(|e| Error::io(&durations_path, e))?;
    let ground_truth = GroundTruth::new(spec.vocabulary.clone(), clips)?;
    Ok(SynthOutput { manifest, ground_truth, index, groundtruth_path, durations_path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psds::read_ground_truth;

    fn small(seed: u64) -> SynthSpec {
        SynthSpec { n_weak: 2, n_strong: 2, n_unlabeled: 2, clip_seconds: 6.0, ..SynthSpec::two_class(seed) }
    }

    #[test]
    fn same_seed_gives_identical_files() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        synth_dataset(&small(7), a.path()).unwrap();
        synth_dataset(&small(7), b.path()).unwrap();
        for entry in std::fs::read_dir(a.path().join("audio")).unwrap() {
            let name = entry.unwrap().file_name();
            let x = std::fs::read(a.path().join("audio").join(&name)).unwrap();
            let y = std::fs::read(b.path().join("audio").join(&name)).unwrap();
            assert_eq!(x, y, "{name:?}");
        }
        for f in ["groundtruth.tsv", "weak.tsv", "strong.tsv"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        }
    }

    #[test]
    fn annotations_are_consistent() {
        let dir = tempfile::tempdir().unwrap();
        let out = synth_dataset(&small(3), dir.path()).unwrap();
        let loaded = DatasetManifest::load(&out.index, true).unwrap();
        assert_eq!(loaded.counts(), (2, 2, 2));
        assert_eq!(loaded.weak, out.manifest.weak);
        let gt = read_ground_truth(&out.groundtruth_path, &out.durations_path, Some(&out.manifest.classes)).unwrap();
        assert_eq!(gt, out.ground_truth);
        for (clip, truth) in &gt.clips {
            assert!(!truth.events.is_empty(), "{clip}");
            for e in &truth.events {
                assert!(e.onset >= 0.0 && e.onset < e.offset && e.offset <= 6.0);
            }
        }
        for row in &loaded.weak {
            let mut expected: Vec<String> =
                gt.clips[&row.clip].events.iter().map(|e| gt.classes[e.class_id].clone()).collect();
            expected.sort_by_key(|c| gt.class_index(c).unwrap());
            expected.dedup();
            assert_eq!(row.labels, expected);
        }
        let strong_events: usize = loaded.strong_clips().iter().map(|(_, r)| r.len()).sum();
        let gt_strong: usize = gt.clips.iter().filter(|(c, _)| c.starts_with("strong")).map(|(_, t)| t.events.len()).sum();
        assert_eq!(strong_events, gt_strong);
    }

    #[test]
    fn tone_energy_sits_at_its_frequency() {
        let spec = SynthSpec {
            sources: vec![SynthSource { class: "Dog".into(), kind: SourceKind::Tone { freq_hz: 1000.0 } }],
            events_per_clip: (1, 1),
            event_seconds: (4.0, 4.0),
            snr_db: (30.0, 30.0),
            clip_seconds: 4.0,
            ..SynthSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let placed = place_events(&spec, &mut rng);
        let w = render(&spec, &placed, &mut rng);
        // correlation with the event frequency dominates an off-band probe
        let probe = |f: f64| {
            let (mut c, mut s) = (0.0, 0.0);
            for (k, v) in w.samples.iter().enumerate() {
                let t = k as f64 / 16_000.0;
                c += v * (2.0 * PI * f * t).cos();
                s += v * (2.0 * PI * f * t).sin();
            }
            (c * c + s * s).sqrt()
        };
        assert!(probe(1000.0) > 50.0 * probe(3000.0));
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let spec = SynthSpec { event_seconds: (5.0, 12.0), ..SynthSpec::default() };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        let mut spec = SynthSpec::default();
        spec.sources[0].class = "Bird".into();
        assert!(spec.validate().is_err());
    }
}
