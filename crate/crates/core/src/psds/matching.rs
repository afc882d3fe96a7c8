use super::{GroundTruth, PsdsParams};
use crate::postprocess::{EventList, EventRecord};
use crate::{Error, Result};

/// Outcome of matching one detection set against the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPointCounts {
    pub threshold: f64,
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    /// `ct[c][k]`: invalid detections of class `c` landing on class `k`.
    pub ct: Vec<Vec<usize>>,
}

/// Intervals of one class sorted by onset, with the running maximum of
/// their offsets so that a backwards scan can stop early.
struct SortedIntervals<'a> {
    events: Vec<&'a EventRecord>,
    max_offset: Vec<f64>,
}

impl<'a> SortedIntervals<'a> {
    fn new(mut events: Vec<&'a EventRecord>) -> Self {
        events.sort_by(|a, b| a.onset.total_cmp(&b.onset));
        let mut running = f64::NEG_INFINITY;
        let max_offset = events
            .iter()
            .map(|e| {
                running = running.max(e.offset);
                running
            })
            .collect();
        Self { events, max_offset }
    }

    /// Sum of overlaps between `query` and every stored interval.
    fn covered(&self, query: &EventRecord) -> f64 {
        let end = self.events.partition_point(|e| e.onset < query.offset);
        let mut total = 0.0;
        for i in (0..end).rev() {
            if self.max_offset[i] <= query.onset {
                break;
            }
            total += self.events[i].intersection(query);
        }
        total
    }
}

/// Applies the detection tolerance, ground-truth intersection and
/// cross-trigger criteria to one operating point.
pub fn match_operating_point(
    threshold: f64,
    detections: &[EventList],
    gt: &GroundTruth,
    params: &PsdsParams,
) -> Result<OperatingPointCounts> {
    let n = gt.n_classes();
    let mut counts = OperatingPointCounts {
        threshold,
        tp: vec![0; n],
        fp: vec![0; n],
        ct: vec![vec![0; n]; n],
    };

    let empty = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for list in detections {
        if !gt.clips.contains_key(&list.clip_id) {
            return Err(Error::Data(format!("detections for unknown clip {:?}", list.clip_id)));
        }
        if !seen.insert(list.clip_id.as_str()) {
            return Err(Error::Data(format!("clip {:?} listed twice", list.clip_id)));
        }
        if let Some(e) = list.events.iter().find(|e| e.class_id >= n) {
            return Err(Error::Data(format!("detection class index {} out of range", e.class_id)));
        }
    }
    let by_clip: std::collections::BTreeMap<&str, &EventList> =
        detections.iter().map(|l| (l.clip_id.as_str(), l)).collect();

    for (clip_id, truth) in &gt.clips {
        let dets = by_clip.get(clip_id.as_str()).map_or(&empty, |l| &l.events);
        let gt_by_class: Vec<SortedIntervals> = (0..n)
            .map(|c| SortedIntervals::new(truth.events.iter().filter(|e| e.class_id == c).collect()))
            .collect();

        let mut valid: Vec<Vec<&EventRecord>> = vec![Vec::new(); n];
        for d in dets {
            let c = d.class_id;
            if gt_by_class[c].covered(d) / d.duration() >= params.dtc {
                valid[c].push(d);
                continue;
            }
            counts.fp[c] += 1;
            if let Some(cttc) = params.cttc {
                for (k, other) in gt_by_class.iter().enumerate() {
                    if k != c && other.covered(d) / d.duration() >= cttc {
                        counts.ct[c][k] += 1;
                    }
                }
            }
        }

        for (c, dets) in valid.into_iter().enumerate() {
            let dets = SortedIntervals::new(dets);
            for g in &gt_by_class[c].events {
                if dets.covered(g) / g.duration() >= params.gtc {
                    counts.tp[c] += 1;
                }
            }
        }
    }
    Ok(counts)
}

/// Per-class rates of one operating point. FPR values are per hour.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRates {
    pub tpr: f64,
    pub fpr: f64,
    pub efpr: f64,
}

pub fn rates(counts: &OperatingPointCounts, gt: &GroundTruth, params: &PsdsParams) -> Result<Vec<ClassRates>> {
    let duration = gt.dataset_duration();
    if !(duration > 0.0) {
        return Err(Error::Data("ground truth covers no audio".into()));
    }
    let n = gt.n_classes();
    let n_events = gt.class_event_counts();
    let class_hours: Vec<f64> = gt.class_durations().iter().map(|s| s / 3600.0).collect();
    let hours = duration / 3600.0;

    (0..n)
        .map(|c| {
            let tpr = counts.tp[c] as f64 / n_events[c].max(1) as f64;
            let fpr = counts.fp[c] as f64 / hours;
            let mut ct_sum = 0.0;
            for k in (0..n).filter(|&k| k != c) {
                let hits = counts.ct[c][k];
                if hits == 0 {
                    continue;
                }
                if class_hours[k] <= 0.0 {
                    return Err(Error::Data(format!(
                        "cross-triggers against class {} which has no annotated duration",
                        gt.classes[k]
                    )));
                }
                ct_sum += hits as f64 / class_hours[k];
            }
            let mean_ct = if n > 1 { ct_sum / (n - 1) as f64 } else { 0.0 };
            Ok(ClassRates {
                tpr,
                fpr,
                efpr: fpr + params.alpha_ct * mean_ct,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::ClipTruth;
    use super::*;
    use std::collections::BTreeMap;

    fn corpus(events: Vec<EventRecord>, duration: f64, n_classes: usize) -> GroundTruth {
        let mut clips = BTreeMap::new();
        clips.insert("a".to_string(), ClipTruth { duration, events });
        GroundTruth::new((0..n_classes).map(|i| format!("c{i}")).collect(), clips).unwrap()
    }

    fn ev(c: usize, on: f64, off: f64) -> EventRecord {
        EventRecord::new(c, on, off).unwrap()
    }

    fn run(gt: &GroundTruth, dets: Vec<EventRecord>, params: &PsdsParams) -> OperatingPointCounts {
        match_operating_point(0.5, &[EventList::new("a", dets)], gt, params).unwrap()
    }

    #[test]
    fn slightly_wide_detection_is_a_true_positive_under_strict_criteria() {
        let gt = corpus(vec![ev(0, 1.0, 2.0)], 10.0, 1);
        let c = run(&gt, vec![ev(0, 0.9, 2.1)], &PsdsParams::scenario1());
        assert_eq!((c.tp[0], c.fp[0]), (1, 0));
    }

    #[test]
    fn twice_as_long_detection_flips_between_scenarios() {
        let gt = corpus(vec![ev(0, 1.0, 2.0)], 10.0, 1);
        let strict = run(&gt, vec![ev(0, 0.5, 2.5)], &PsdsParams::scenario1());
        assert_eq!((strict.tp[0], strict.fp[0]), (0, 1));
        let lax = run(&gt, vec![ev(0, 0.5, 2.5)], &PsdsParams::scenario2());
        assert_eq!((lax.tp[0], lax.fp[0]), (1, 0));
    }

    #[test]
    fn no_detections_means_zero_counts() {
        let gt = corpus(vec![ev(0, 1.0, 2.0)], 10.0, 2);
        let c = match_operating_point(0.5, &[], &gt, &PsdsParams::scenario2()).unwrap();
        assert!(c.tp.iter().chain(&c.fp).all(|&v| v == 0));
        assert!(c.ct.iter().flatten().all(|&v| v == 0));
    }

    #[test]
    fn cross_trigger_is_counted_only_with_cttc() {
        let gt = corpus(vec![ev(1, 1.0, 3.0)], 10.0, 2);
        let dets = vec![ev(0, 1.5, 2.5)];
        let lax = run(&gt, dets.clone(), &PsdsParams::scenario2());
        assert_eq!(lax.fp[0], 1);
        assert_eq!(lax.ct[0][1], 1);
        let strict = run(&gt, dets, &PsdsParams::scenario1());
        assert_eq!(strict.ct[0][1], 0);
    }

    #[test]
    fn several_detections_can_jointly_cover_one_event() {
        let gt = corpus(vec![ev(0, 0.0, 4.0)], 10.0, 1);
        let c = run(&gt, vec![ev(0, 0.0, 1.5), ev(0, 2.0, 3.5)], &PsdsParams::scenario1());
        // 3.0 s of 4.0 s covered
        assert_eq!((c.tp[0], c.fp[0]), (1, 0));
    }

    #[test]
    fn unknown_clip_is_a_data_error() {
        let gt = corpus(vec![], 10.0, 1);
        let err = match_operating_point(0.5, &[EventList::new("zzz", vec![])], &gt, &PsdsParams::scenario1());
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn false_positive_rate_is_per_hour() {
        let gt = corpus(vec![ev(0, 0.0, 1.0)], 1800.0, 1);
        let counts = OperatingPointCounts {
            threshold: 0.5,
            tp: vec![0],
            fp: vec![3],
            ct: vec![vec![0]],
        };
        let r = rates(&counts, &gt, &PsdsParams::scenario1()).unwrap();
        assert!((r[0].efpr - 6.0).abs() < 1e-12);
        assert_eq!(r[0].fpr, r[0].efpr);
    }

    #[test]
    fn zero_alpha_ct_ignores_cross_triggers() {
        let gt = corpus(vec![ev(0, 0.0, 1.0), ev(1, 0.0, 1.0)], 3600.0, 2);
        let counts = OperatingPointCounts {
            threshold: 0.5,
            tp: vec![1, 1],
            fp: vec![2, 0],
            ct: vec![vec![0, 5], vec![0, 0]],
        };
        let r = rates(&counts, &gt, &PsdsParams::scenario1()).unwrap();
        assert_eq!(r[0].efpr, 2.0);
        assert_eq!(r[0].tpr, 1.0);
        let r = rates(&counts, &gt, &PsdsParams::scenario2()).unwrap();
        // 5 cross-triggers over 1 s of class-1 audio, per hour, halved by alpha_ct
        assert!((r[0].efpr - (2.0 + 0.5 * 5.0 * 3600.0)).abs() < 1e-9);
    }

    #[test]
    fn cross_trigger_on_unannotated_class_is_a_data_error() {
        let gt = corpus(vec![ev(0, 0.0, 1.0)], 3600.0, 2);
        let counts = OperatingPointCounts {
            threshold: 0.5,
            tp: vec![0, 0],
            fp: vec![1, 0],
            ct: vec![vec![0, 1], vec![0, 0]],
        };
        assert!(matches!(rates(&counts, &gt, &PsdsParams::scenario2()), Err(Error::Data(_))));
    }
}
