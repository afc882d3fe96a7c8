//! Shared helpers for the integration tests: random scoring instances and
//! a brute-force reference scorer that shares no code with the library
//! matcher.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sedpool::postprocess::{EventList, EventRecord};
use sedpool::psds::{ClipTruth, GroundTruth, OperatingPoint, PsdsParams};

/// `(class, onset, offset)`
pub type Interval = (usize, f64, f64);

#[derive(Debug, Clone)]
pub struct Instance {
    pub n_classes: usize,
    /// `(duration, ground-truth events)` per clip.
    pub clips: Vec<(f64, Vec<Interval>)>,
    /// `operating_points[k][clip]` lists the detections at threshold `k`.
    pub operating_points: Vec<Vec<Vec<Interval>>>,
}

fn clip_id(i: usize) -> String {
    format!("clip{i}")
}

impl Instance {
    pub fn ground_truth(&self) -> GroundTruth {
        let clips = self
            .clips
            .iter()
            .enumerate()
            .map(|(i, (duration, events))| {
                let events = events.iter().map(|&(c, on, off)| EventRecord::new(c, on, off).unwrap()).collect();
                (clip_id(i), ClipTruth { duration: *duration, events })
            })
            .collect::<BTreeMap<_, _>>();
        GroundTruth::new((0..self.n_classes).map(|c| format!("class{c}")).collect(), clips).unwrap()
    }

    pub fn operating_points(&self) -> Vec<OperatingPoint> {
        self.operating_points
            .iter()
            .enumerate()
            .map(|(k, per_clip)| OperatingPoint {
                threshold: (k + 1) as f64 / (self.operating_points.len() + 1) as f64,
                detections: per_clip
                    .iter()
                    .enumerate()
                    .map(|(i, dets)| {
                        EventList::new(
                            clip_id(i),
                            dets.iter().map(|&(c, on, off)| EventRecord::new(c, on, off).unwrap()).collect(),
                        )
                    })
                    .collect(),
            })
            .collect()
    }
}

/// A random corpus with at most 5 clips, `max_classes` classes and 20
/// ground-truth events, scored at 1 to 6 operating points. Detections are
/// a mix of jittered copies of the ground truth (sometimes with the wrong
/// class) and free-floating intervals.
pub fn random_instance(seed: u64, max_classes: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = rng.random_range(1..=max_classes);
    let n_clips = rng.random_range(1..=5);
    let mut budget = rng.random_range(1..=20usize);

    let mut clips: Vec<(f64, Vec<Interval>)> = Vec::with_capacity(n_clips);
    for i in 0..n_clips {
        let duration: f64 = rng.random_range(5.0..30.0);
        let remaining = n_clips - i;
        let n = if remaining == 1 { budget } else { rng.random_range(0..=budget.min(8)) };
        budget -= n;
        let events = (0..n)
            .map(|_| {
                let onset: f64 = rng.random_range(0.0..duration - 0.2);
                let len = rng.random_range(0.2..(duration - onset).min(6.0));
                (rng.random_range(0..n_classes), onset, (onset + len).min(duration))
            })
            .collect();
        clips.push((duration, events));
    }

    let n_points = rng.random_range(1..=6);
    let mut operating_points = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        // operating points range from clean to noisy
        let keep = rng.random_range(0.2..1.0);
        let jitter = rng.random_range(0.02..1.0);
        let swap = rng.random_range(0.0..0.3);
        let max_free = rng.random_range(0..=3);
        let per_clip = clips
            .iter()
            .map(|(duration, events)| {
                let mut dets = Vec::new();
                for &(c, on, off) in events {
                    if rng.random_bool(keep) {
                        let c = if rng.random_bool(swap) { rng.random_range(0..n_classes) } else { c };
                        let on = (on + rng.random_range(-jitter..jitter)).max(0.0);
                        let off = (off + rng.random_range(-jitter..jitter)).min(*duration).max(on + 0.05);
                        dets.push((c, on, off));
                    }
                }
                for _ in 0..rng.random_range(0..=max_free) {
                    let on: f64 = rng.random_range(0.0..duration - 0.1);
                    let off = (on + rng.random_range(0.1..4.0)).min(*duration);
                    dets.push((rng.random_range(0..n_classes), on, off));
                }
                dets
            })
            .collect();
        operating_points.push(per_clip);
    }
    Instance { n_classes, clips, operating_points }
}

fn overlap(a: &Interval, b: &Interval) -> f64 {
    let lo = if a.1 > b.1 { a.1 } else { b.1 };
    let hi = if a.2 < b.2 { a.2 } else { b.2 };
    if hi > lo {
        hi - lo
    } else {
        0.0
    }
}

fn covered_by(x: &Interval, others: &[Interval], class: usize) -> f64 {
    others.iter().filter(|o| o.0 == class).map(|o| overlap(x, o)).sum()
}

/// Per-threshold `(tpr, efpr)` of every class, computed by enumerating
/// every detection/ground-truth pair.
pub fn oracle_rates(inst: &Instance, params: &PsdsParams) -> Vec<Vec<(f64, f64)>> {
    let n = inst.n_classes;
    let hours: f64 = inst.clips.iter().map(|c| c.0).sum::<f64>() / 3600.0;
    let mut n_events = vec![0usize; n];
    let mut class_hours = vec![0.0; n];
    for (_, events) in &inst.clips {
        for e in events {
            n_events[e.0] += 1;
            class_hours[e.0] += (e.2 - e.1) / 3600.0;
        }
    }

    inst.operating_points
        .iter()
        .map(|per_clip| {
            let mut tp = vec![0usize; n];
            let mut fp = vec![0usize; n];
            let mut ct = vec![vec![0usize; n]; n];
            for ((_, truth), dets) in inst.clips.iter().zip(per_clip) {
                let mut valid = Vec::new();
                for d in dets {
                    let len = d.2 - d.1;
                    if covered_by(d, truth, d.0) / len >= params.dtc {
                        valid.push(*d);
                        continue;
                    }
                    fp[d.0] += 1;
                    if let Some(cttc) = params.cttc {
                        for k in 0..n {
                            if k != d.0 && covered_by(d, truth, k) / len >= cttc {
                                ct[d.0][k] += 1;
                            }
                        }
                    }
                }
                for g in truth {
                    if covered_by(g, &valid, g.0) / (g.2 - g.1) >= params.gtc {
                        tp[g.0] += 1;
                    }
                }
            }
            (0..n)
                .map(|c| {
                    let tpr = tp[c] as f64 / n_events[c].max(1) as f64;
                    let mut ct_rate = 0.0;
                    for k in 0..n {
                        if k != c && ct[c][k] > 0 {
                            ct_rate += ct[c][k] as f64 / class_hours[k];
                        }
                    }
                    let mean_ct = if n > 1 { ct_rate / (n - 1) as f64 } else { 0.0 };
                    (tpr, fp[c] as f64 / hours + params.alpha_ct * mean_ct)
                })
                .collect()
        })
        .collect()
}

/// Reference score: the effective TPR is evaluated on every interval
/// between consecutive effective FPR values, with the per-class support
/// found by scanning all operating points.
pub fn oracle_psds(inst: &Instance, params: &PsdsParams) -> f64 {
    let rates = oracle_rates(inst, params);
    let mut counts = vec![0usize; inst.n_classes];
    for e in inst.clips.iter().flat_map(|c| &c.1) {
        counts[e.0] += 1;
    }
    let scored: Vec<usize> = (0..inst.n_classes).filter(|&c| counts[c] > 0).collect();

    let mut edges = vec![0.0, params.e_max];
    for op in &rates {
        for &c in &scored {
            let e = op[c].1;
            if e > 0.0 && e < params.e_max {
                edges.push(e);
            }
        }
    }
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup();

    let mut area = 0.0;
    for w in edges.windows(2) {
        let support: Vec<f64> = scored
            .iter()
            .map(|&c| {
                rates
                    .iter()
                    .filter(|op| op[c].1 <= w[0])
                    .map(|op| op[c].0)
                    .fold(0.0, f64::max)
            })
            .collect();
        let k = support.len() as f64;
        let mean = support.iter().sum::<f64>() / k;
        let var = support.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / k;
        let mu = mean - params.alpha_st * var.sqrt();
        if mu > 0.0 {
            area += mu * (w[1] - w[0]);
        }
    }
    area / params.e_max
}

/// Scenario-1 parameters with the detection and ground-truth criteria
/// replaced; cross-triggers stay disabled.
pub fn criteria(dtc: f64, gtc: f64) -> PsdsParams {
    PsdsParams { dtc, gtc, ..PsdsParams::scenario1() }
}
