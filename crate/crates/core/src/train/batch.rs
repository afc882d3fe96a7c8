use crate::audio::SpectralMap;
use crate::nn::Tensor;
use crate::postprocess::EventRecord;
use crate::{Error, Result, N_MELS};

/// A clip with clip-level labels (class ids).
#[derive(Debug, Clone)]
pub struct WeakClip {
    pub features: SpectralMap,
    pub labels: Vec<usize>,
}

/// A clip with event-level annotations.
#[derive(Debug, Clone)]
pub struct StrongClip {
    pub features: SpectralMap,
    pub events: Vec<EventRecord>,
}

/// The three training pools. Features are expected to be standardized
/// already.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub n_classes: usize,
    pub weak: Vec<WeakClip>,
    pub strong: Vec<StrongClip>,
    pub unlabeled: Vec<SpectralMap>,
}

impl TrainingData {
    /// Longest clip in frames; shorter clips are zero padded to it.
    pub fn n_frames(&self) -> usize {
        self.weak
            .iter()
            .map(|c| &c.features)
            .chain(self.strong.iter().map(|c| &c.features))
            .chain(&self.unlabeled)
            .map(|m| m.n_frames)
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self, weak_needed: bool, strong_needed: bool, unlabeled_needed: bool) -> Result<()> {
        for (name, empty, needed) in [
            ("weak", self.weak.is_empty(), weak_needed),
            ("strong", self.strong.is_empty(), strong_needed),
            ("unlabeled", self.unlabeled.is_empty(), unlabeled_needed),
        ] {
            if empty && needed {
                return Err(Error::Config(format!("the {name} pool is empty but the batch split draws from it")));
            }
        }
        let maps = self
            .weak
            .iter()
            .map(|c| &c.features)
            .chain(self.strong.iter().map(|c| &c.features))
            .chain(&self.unlabeled);
        for m in maps {
            if m.n_mels != N_MELS {
                return Err(Error::Shape(format!("clip {} has {} mel bins, expected {N_MELS}", m.clip_id, m.n_mels)));
            }
        }
        let classes_ok = self.weak.iter().all(|c| c.labels.iter().all(|&l| l < self.n_classes))
            && self.strong.iter().all(|c| c.events.iter().all(|e| e.class_id < self.n_classes));
        if !classes_ok {
            return Err(Error::Data(format!("a label exceeds the {} model classes", self.n_classes)));
        }
        Ok(())
    }

    /// Stacks the selected clips into a batch with labels on a grid of
    /// `t_out` frames of `frame_duration` seconds.
    pub fn assemble(
        &self,
        weak: &[usize],
        strong: &[usize],
        unlabeled: &[usize],
        n_frames: usize,
        t_out: usize,
        frame_duration: f64,
    ) -> Result<LabeledBatch> {
        let c = self.n_classes;
        let plane = n_frames * N_MELS;
        let n = weak.len() + strong.len() + unlabeled.len();
        let mut features = vec![0.0; n * plane];
        let maps = weak
            .iter()
            .map(|&i| &self.weak[i].features)
            .chain(strong.iter().map(|&i| &self.strong[i].features))
            .chain(unlabeled.iter().map(|&i| &self.unlabeled[i]));
        for (slot, map) in features.chunks_exact_mut(plane).zip(maps) {
            let len = map.n_frames.min(n_frames) * N_MELS;
            slot[..len].copy_from_slice(&map.values[..len]);
        }
        let mut weak_labels = vec![0.0; weak.len() * c];
        for (row, &i) in weak_labels.chunks_exact_mut(c).zip(weak) {
            for &l in &self.weak[i].labels {
                row[l] = 1.0;
            }
        }
        let mut strong_labels = Vec::with_capacity(strong.len() * t_out * c);
        for &i in strong {
            strong_labels.extend(rasterize_strong(&self.strong[i].events, t_out, frame_duration, c));
        }
        Ok(LabeledBatch {
            features: Tensor::new(&[n, 1, n_frames, N_MELS], features)?,
            n_weak: weak.len(),
            n_strong: strong.len(),
            n_unlabeled: unlabeled.len(),
            weak_labels,
            strong_labels,
        })
    }
}

/// Which pool a batch row was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    Weak,
    Strong,
    Unlabeled,
}

/// One training batch. Rows are ordered weak, then strong, then
/// unlabeled.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    /// `[B, 1, T, 128]`
    pub features: Tensor,
    pub n_weak: usize,
    pub n_strong: usize,
    pub n_unlabeled: usize,
    /// `n_weak x C`, row-major.
    pub weak_labels: Vec<f64>,
    /// `n_strong x T' x C`, row-major.
    pub strong_labels: Vec<f64>,
}

impl LabeledBatch {
    pub fn len(&self) -> usize {
        self.n_weak + self.n_strong + self.n_unlabeled
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, row: usize) -> Subset {
        if row < self.n_weak {
            Subset::Weak
        } else if row < self.n_weak + self.n_strong {
            Subset::Strong
        } else {
            Subset::Unlabeled
        }
    }
}

/// Frame `j` of class `c` is positive iff `[j dt, (j+1) dt)` overlaps an
/// event of class `c`. Returns `t_out x n_classes`, row-major.
pub fn rasterize_strong(events: &[EventRecord], t_out: usize, dt: f64, n_classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; t_out * n_classes];
    for e in events {
        if e.class_id >= n_classes {
            continue;
        }
        let first = (e.onset / dt).floor().max(0.0) as usize;
        for j in first..t_out {
            let (lo, hi) = (j as f64 * dt, (j + 1) as f64 * dt);
            if lo >= e.offset {
                break;
            }
            if e.onset < hi && e.offset > lo {
                out[j * n_classes + e.class_id] = 1.0;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(c: usize, on: f64, off: f64) -> EventRecord {
        EventRecord::new(c, on, off).unwrap()
    }

    #[test]
    fn overlap_rule() {
        let r = rasterize_strong(&[ev(1, 0.9, 2.1)], 4, 1.0, 2);
        assert_eq!(r, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        // touching a frame boundary does not count as overlap
        let r = rasterize_strong(&[ev(0, 1.0, 2.0)], 3, 1.0, 1);
        assert_eq!(r, vec![0.0, 1.0, 0.0]);
        // a sliver shorter than one frame still marks its frame
        let r = rasterize_strong(&[ev(0, 2.4, 2.41)], 3, 1.0, 1);
        assert_eq!(r, vec![0.0, 0.0, 1.0]);
        // past the grid is ignored
        let r = rasterize_strong(&[ev(0, 5.0, 6.0)], 3, 1.0, 1);
        assert_eq!(r, vec![0.0; 3]);
    }

    #[test]
    fn brute_force_agreement() {
        let events = [ev(0, 0.3, 1.7), ev(1, 1.05, 1.06), ev(0, 2.5268, 3.0), ev(1, 0.0, 0.5268)];
        let dt = 0.5268;
        let r = rasterize_strong(&events, 8, dt, 2);
        for j in 0..8 {
            for c in 0..2 {
                let (lo, hi) = (j as f64 * dt, (j + 1) as f64 * dt);
                let hit = events.iter().any(|e| e.class_id == c && e.onset < hi && e.offset > lo);
                assert_eq!(r[j * 2 + c], if hit { 1.0 } else { 0.0 }, "frame {j} class {c}");
            }
        }
    }

    #[test]
    fn assemble_pads_and_orders_rows() {
        let map = |id: &str, t: usize, v: f64| SpectralMap::new(id, t, N_MELS, 0.01, vec![v; t * N_MELS]).unwrap();
        let data = TrainingData {
            n_classes: 2,
            weak: vec![WeakClip { features: map("w", 4, 1.0), labels: vec![1] }],
            strong: vec![StrongClip { features: map("s", 3, 2.0), events: vec![ev(0, 0.0, 0.01)] }],
            unlabeled: vec![map("u", 4, 3.0)],
        };
        data.validate(true, true, true).unwrap();
        assert_eq!(data.n_frames(), 4);
        let b = data.assemble(&[0], &[0], &[0, 0], 4, 2, 0.02).unwrap();
        assert_eq!(b.features.shape(), &[4, 1, 4, N_MELS]);
        assert_eq!(b.weak_labels, vec![0.0, 1.0]);
        assert_eq!(b.strong_labels, vec![1.0, 0.0, 0.0, 0.0]);
        let plane = 4 * N_MELS;
        assert_eq!(b.features.data[plane + 3 * N_MELS - 1], 2.0);
        assert_eq!(b.features.data[plane + 3 * N_MELS], 0.0);
        assert_eq!(b.features.data[3 * plane], 3.0);
        assert_eq!(
            (0..4).map(|r| b.subset(r)).collect::<Vec<_>>(),
            vec![Subset::Weak, Subset::Strong, Subset::Unlabeled, Subset::Unlabeled]
        );
    }

    #[test]
    fn empty_required_pool_is_a_config_error() {
        let data = TrainingData { n_classes: 1, weak: vec![], strong: vec![], unlabeled: vec![] };
        assert!(matches!(data.validate(true, false, false), Err(Error::Config(_))));
        data.validate(false, false, false).unwrap();
    }
}
