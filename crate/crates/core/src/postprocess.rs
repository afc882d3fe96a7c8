//! Frame probabilities to event lists: threshold, median filter, merge
//! runs separated by short gaps.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::model::ScenarioPreset;
use crate::{Error, Result};

/// Frame-level class probabilities of one clip, `n_frames x n_classes`
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    pub clip_id: String,
    pub n_frames: usize,
    pub n_classes: usize,
    pub probs: Vec<f64>,
    pub frame_duration: f64,
    pub clip_length: f64,
}

impl PredictionMatrix {
    pub fn new(
        clip_id: impl Into<String>,
        n_frames: usize,
        n_classes: usize,
        probs: Vec<f64>,
        frame_duration: f64,
        clip_length: f64,
    ) -> Result<Self> {
        if probs.len() != n_frames * n_classes {
            return Err(Error::Shape(format!(
                "prediction matrix expects {} values, got {}",
                n_frames * n_classes,
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInput("probabilities must be finite and in [0, 1]".into()));
        }
        if frame_duration <= 0.0 || clip_length <= 0.0 {
            return Err(Error::InvalidInput("frame duration and clip length must be positive".into()));
        }
        Ok(Self {
            clip_id: clip_id.into(),
            n_frames,
            n_classes,
            probs,
            frame_duration,
            clip_length,
        })
    }

    pub fn column(&self, class: usize) -> Vec<f64> {
        (0..self.n_frames).map(|t| self.probs[t * self.n_classes + class]).collect()
    }
}

/// One annotated or detected sound event, times in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub class_id: usize,
    pub onset: f64,
    pub offset: f64,
}

impl EventRecord {
    pub fn new(class_id: usize, onset: f64, offset: f64) -> Result<Self> {
        if !(onset.is_finite() && offset.is_finite()) || onset < 0.0 || onset >= offset {
            return Err(Error::InvalidInput(format!(
                "event needs 0 <= onset < offset, got [{onset}, {offset}]"
            )));
        }
        Ok(Self {
            class_id,
            onset,
            offset,
        })
    }

    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }

    /// Length of the overlap with `other`; zero when disjoint.
    pub fn intersection(&self, other: &EventRecord) -> f64 {
        (self.offset.min(other.offset) - self.onset.max(other.onset)).max(0.0)
    }
}

/// Events of one clip, sorted by `(class_id, onset)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventList {
    pub clip_id: String,
    pub events: Vec<EventRecord>,
}

impl EventList {
    pub fn new(clip_id: impl Into<String>, mut events: Vec<EventRecord>) -> Self {
        events.sort_by(|a, b| a.class_id.cmp(&b.class_id).then(a.onset.total_cmp(&b.onset)));
        Self {
            clip_id: clip_id.into(),
            events,
        }
    }

    pub fn of_class(&self, class_id: usize) -> impl Iterator<Item = &EventRecord> {
        self.events.iter().filter(move |e| e.class_id == class_id)
    }
}

/// `1` where `prob >= threshold`.
pub fn binarize(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p >= threshold)).collect()
}

/// Running median of a binary signal with an odd window, treating frames
/// outside the signal as zeros.
pub fn median_filter(signal: &[u8], window: usize) -> Result<Vec<u8>> {
    if window.is_multiple_of(2) {
        return Err(Error::Config(format!("median window must be odd, got {window}")));
    }
    let half = window / 2;
    let n = signal.len();
    // for a binary window the median is 1 iff more than half the taps are 1
    let mut prefix = vec![0usize; n + 1];
    for (i, &v) in signal.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v as usize;
    }
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            u8::from(prefix[hi] - prefix[lo] > half)
        })
        .collect())
}

/// Converts one class column into events. Frame `i` covers
/// `[i * frame_duration, (i + 1) * frame_duration)`. Runs whose separation
/// is strictly below `gap_tolerance` are merged; offsets are clipped to
/// `clip_length`.
pub fn frames_to_events(
    signal: &[u8],
    class_id: usize,
    frame_duration: f64,
    gap_tolerance: f64,
    clip_length: f64,
) -> Vec<EventRecord> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (i, &v) in signal.iter().chain(std::iter::once(&0)).enumerate() {
        match (v, start) {
            (1, None) => start = Some(i),
            (0, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }

    let mut events: Vec<EventRecord> = Vec::with_capacity(runs.len());
    for (s, e) in runs {
        let onset = s as f64 * frame_duration;
        let offset = (e as f64 * frame_duration).min(clip_length);
        if onset >= offset {
            continue;
        }
        match events.last_mut() {
            Some(prev) if onset - prev.offset < gap_tolerance => prev.offset = offset,
            _ => events.push(EventRecord {
                class_id,
                onset,
                offset,
            }),
        }
    }
    events
}

/// Decodes one clip at every threshold of the preset.
pub fn decode(pred: &PredictionMatrix, preset: &ScenarioPreset) -> Result<BTreeMap<ThresholdKey, EventList>> {
    if preset.thresholds.is_empty() {
        return Err(Error::Config("preset has no thresholds".into()));
    }
    let mut out = BTreeMap::new();
    for &tau in &preset.thresholds {
        let mut events = Vec::new();
        for class in 0..pred.n_classes {
            let binary = binarize(&pred.column(class), tau);
            let smoothed = median_filter(&binary, preset.median_window)?;
            events.extend(frames_to_events(
                &smoothed,
                class,
                pred.frame_duration,
                preset.gap_tolerance,
                pred.clip_length,
            ));
        }
        out.insert(ThresholdKey(tau), EventList::new(pred.clip_id.clone(), events));
    }
    Ok(out)
}

/// Totally ordered threshold for use as a map key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdKey(pub f64);

impl Eq for ThresholdKey {}

impl PartialOrd for ThresholdKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ThresholdKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// File name used for the detections at threshold `tau`.
pub fn detection_file_name(tau: f64) -> String {
    format!("detections_{tau:.4}.tsv")
}

/// Writes `clip_id<TAB>onset<TAB>offset<TAB>class_name` rows.
pub fn write_detections(path: &Path, lists: &[EventList], class_names: &[String]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "filename\tonset\toffset\tevent_label").unwrap();
    for list in lists {
        for e in &list.events {
            let name = class_names
                .get(e.class_id)
                .ok_or_else(|| Error::Data(format!("class index {} has no name", e.class_id)))?;
            writeln!(out, "{}\t{:.4}\t{:.4}\t{}", list.clip_id, e.onset, e.offset, name).unwrap();
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarize_is_inclusive() {
        assert_eq!(binarize(&[0.2, 0.5, 0.9], 0.5), vec![0, 1, 1]);
        assert_eq!(binarize(&[0.5; 3], 0.5), vec![1, 1, 1]);
    }

    #[test]
    fn median_removes_isolated_spike() {
        assert_eq!(median_filter(&[0, 0, 0, 1, 0, 0, 0], 7).unwrap(), vec![0; 7]);
    }

    #[test]
    fn median_keeps_runs_of_four_or_more() {
        for n in 4..12 {
            assert_eq!(median_filter(&vec![1; n], 7).unwrap(), vec![1; n]);
        }
        assert_eq!(median_filter(&[1, 1, 1], 7).unwrap(), vec![0; 3]);
    }

    #[test]
    fn median_fills_single_gap() {
        let x = [1, 1, 1, 1, 1, 0, 1, 1, 1, 1, 1];
        assert_eq!(median_filter(&x, 7).unwrap(), vec![1; 11]);
    }

    #[test]
    fn even_window_is_a_config_error() {
        assert!(matches!(median_filter(&[0, 1], 6), Err(Error::Config(_))));
    }

    #[test]
    fn coarse_grid_keeps_events_apart() {
        let dt = 32.0 * 363.0 / 22_050.0;
        let ev = frames_to_events(&[0, 1, 1, 0, 1, 1, 0], 0, dt, 0.2, 10.0);
        assert_eq!(ev.len(), 2);
        assert!((ev[0].onset - dt).abs() < 1e-12 && (ev[0].offset - 3.0 * dt).abs() < 1e-12);
        assert!((ev[1].onset - 4.0 * dt).abs() < 1e-12 && (ev[1].offset - 6.0 * dt).abs() < 1e-12);
        assert!((ev[0].onset - 0.527).abs() < 1e-3 && (ev[0].offset - 1.580).abs() < 1e-3);
        assert!((ev[1].onset - 2.107).abs() < 1e-3 && (ev[1].offset - 3.161).abs() < 1e-3);
    }

    #[test]
    fn fine_grid_merges_short_gap() {
        let dt = 4.0 * 363.0 / 22_050.0;
        let ev = frames_to_events(&[0, 1, 1, 0, 1, 1, 0], 0, dt, 0.2, 10.0);
        assert_eq!(ev.len(), 1);
        assert!((ev[0].onset - 0.0659).abs() < 1e-4);
        assert!((ev[0].offset - 0.395).abs() < 1e-3);
    }

    #[test]
    fn exact_gap_tolerance_stays_split() {
        let ev = frames_to_events(&[1, 0, 1], 0, 0.25, 0.25, 10.0);
        assert_eq!(ev.len(), 2);
    }

    #[test]
    fn silence_gives_no_events() {
        assert!(frames_to_events(&[0; 9], 3, 0.1, 0.2, 1.0).is_empty());
    }

    #[test]
    fn offsets_are_clipped_to_clip_length() {
        let ev = frames_to_events(&[1, 1, 1], 0, 0.5, 0.2, 1.2);
        assert_eq!(ev[0].offset, 1.2);
    }

    #[test]
    fn decode_constant_class() {
        let preset = ScenarioPreset::scenario2();
        let t = 19;
        let mut probs = vec![0.0; t * 10];
        for row in probs.chunks_mut(10) {
            row[0] = 0.9;
        }
        let pred = PredictionMatrix::new("c", t, 10, probs, preset.frame_duration(), 10.0).unwrap();
        let decoded = decode(&pred, &preset).unwrap();
        let at_half = &decoded[&ThresholdKey(*preset.thresholds.iter().find(|&&x| x >= 0.5).unwrap())];
        assert_eq!(at_half.events.len(), 1);
        assert_eq!(at_half.events[0].class_id, 0);
        assert_eq!(at_half.events[0].onset, 0.0);
        assert_eq!(at_half.events[0].offset, 10.0);
        for list in decoded.values() {
            assert!(list.events.iter().all(|e| e.class_id == 0));
        }
    }

    proptest::proptest! {
        #[test]
        fn events_are_disjoint_and_gapped(
            signal in proptest::collection::vec(0u8..=1, 0..80),
            dt in 0.01f64..0.6,
        ) {
            let clip = signal.len() as f64 * dt + 0.5;
            let ev = frames_to_events(&signal, 0, dt, 0.2, clip);
            for e in &ev {
                proptest::prop_assert!(e.onset < e.offset && e.offset <= clip);
            }
            for w in ev.windows(2) {
                proptest::prop_assert!(w[1].onset - w[0].offset >= 0.2);
            }
        }

        #[test]
        fn rasterized_events_round_trip(
            runs in proptest::collection::vec((1usize..5, 1usize..5), 1..6),
        ) {
            let dt = 0.1;
            let mut signal = Vec::new();
            let mut expected = Vec::new();
            for (gap, len) in runs {
                signal.extend(std::iter::repeat_n(0u8, gap));
                expected.push((signal.len(), signal.len() + len));
                signal.extend(std::iter::repeat_n(1u8, len));
            }
            let ev = frames_to_events(&signal, 2, dt, 0.0, signal.len() as f64 * dt);
            proptest::prop_assert_eq!(ev.len(), expected.len());
            for (e, (s, t)) in ev.iter().zip(expected) {
                proptest::prop_assert!((e.onset - s as f64 * dt).abs() < 1e-12);
                proptest::prop_assert!((e.offset - t as f64 * dt).abs() < 1e-12);
            }
        }
    }
}
