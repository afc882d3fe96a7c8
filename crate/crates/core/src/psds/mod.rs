//! Intersection-based polyphonic sound detection score.
//!
//! For each operating point (one detection set per decision threshold):
//!
//! 1. **Matching.** A detection of class `c` is valid when the share of its
//!    length covered by same-class ground truth reaches `dtc`; otherwise it
//!    is a false positive. A ground-truth event is a true positive when the
//!    share of its length covered by valid same-class detections reaches
//!    `gtc`. When `cttc` is set, an invalid detection also counts one
//!    cross-trigger against every other class whose ground truth covers at
//!    least `cttc` of it.
//! 2. **Rates.** TPR per class; FP per hour of audio; cross-triggers per
//!    hour of the cross-triggered class's ground truth; the effective FPR
//!    adds `alpha_ct` times the mean cross-trigger rate.
//! 3. **Curve.** Per class, the best TPR reachable at effective FPR `<= e`.
//!    The effective TPR at `e` is the mean over classes minus `alpha_st`
//!    times their population standard deviation, floored at zero. The score
//!    is its exact area over `[0, e_max]` divided by `e_max`.

mod io;
mod matching;
mod roc;

pub use io::{read_detections, read_ground_truth, write_report};
pub use matching::{match_operating_point, rates, ClassRates, OperatingPointCounts};
pub use roc::{evaluate, psd_roc, ClassCurve, OperatingPointRates, PsdsReport, TableRow};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::postprocess::EventRecord;
use crate::{Error, Result};

/// Scoring hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdsParams {
    /// Detection tolerance criterion.
    pub dtc: f64,
    /// Ground-truth intersection criterion.
    pub gtc: f64,
    /// Cross-trigger tolerance criterion; `None` disables cross-triggers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cttc: Option<f64>,
    /// Cost of class instability.
    pub alpha_st: f64,
    /// Cost of cross-triggers.
    pub alpha_ct: f64,
    /// Upper end of the effective FPR axis, per hour.
    pub e_max: f64,
}

impl PsdsParams {
    /// Strict localization: `(0.7, 0.7, -, 1, 0, 100)`.
    pub fn scenario1() -> Self {
        Self {
            dtc: 0.7,
            gtc: 0.7,
            cttc: None,
            alpha_st: 1.0,
            alpha_ct: 0.0,
            e_max: 100.0,
        }
    }

    /// Lax localization with cross-trigger cost: `(0.1, 0.1, 0.3, 1, 0.5, 100)`.
    pub fn scenario2() -> Self {
        Self {
            dtc: 0.1,
            gtc: 0.1,
            cttc: Some(0.3),
            alpha_st: 1.0,
            alpha_ct: 0.5,
            e_max: 100.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ratio_ok = |v: f64| v > 0.0 && v <= 1.0;
        if !ratio_ok(self.dtc) || !ratio_ok(self.gtc) || self.cttc.is_some_and(|c| !ratio_ok(c)) {
            return Err(Error::Config(format!("PSDS criteria must lie in (0, 1]: {self:?}")));
        }
        if self.alpha_st < 0.0 || self.alpha_ct < 0.0 || !(self.e_max > 0.0) {
            return Err(Error::Config(format!(
                "PSDS costs must be non-negative and e_max positive: {self:?}"
            )));
        }
        if self.cttc.is_some() != (self.alpha_ct > 0.0) {
            return Err(Error::Config(
                "cttc must be set exactly when alpha_ct is positive".into(),
            ));
        }
        Ok(())
    }
}

/// Annotations of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipTruth {
    pub duration: f64,
    pub events: Vec<EventRecord>,
}

/// Reference annotations for a corpus.
///
/// `classes` is the vocabulary detections may use. Only classes with at
/// least one annotated event are scored; the others still produce false
/// positives but do not enter the across-class average.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub classes: Vec<String>,
    pub clips: BTreeMap<String, ClipTruth>,
}

impl GroundTruth {
    pub fn new(classes: Vec<String>, clips: BTreeMap<String, ClipTruth>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Data("ground truth needs at least one class".into()));
        }
        for (id, clip) in &clips {
            if !(clip.duration > 0.0) {
                return Err(Error::Data(format!("clip {id} has non-positive duration")));
            }
            for e in &clip.events {
                if e.class_id >= classes.len() {
                    return Err(Error::Data(format!("clip {id}: class index {} out of range", e.class_id)));
                }
                if e.onset < 0.0 || e.onset >= e.offset || e.offset > clip.duration + 1e-9 {
                    return Err(Error::Data(format!(
                        "clip {id}: event [{}, {}] outside [0, {}] or empty",
                        e.onset, e.offset, clip.duration
                    )));
                }
            }
        }
        Ok(Self { classes, clips })
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, name: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Data(format!("unknown class name {name:?}")))
    }

    /// Total audio duration in seconds.
    pub fn dataset_duration(&self) -> f64 {
        self.clips.values().map(|c| c.duration).sum()
    }

    /// Summed event duration per class, seconds.
    pub fn class_durations(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.classes.len()];
        for e in self.clips.values().flat_map(|c| &c.events) {
            out[e.class_id] += e.duration();
        }
        out
    }

    pub fn class_event_counts(&self) -> Vec<usize> {
        let mut out = vec![0; self.classes.len()];
        for e in self.clips.values().flat_map(|c| &c.events) {
            out[e.class_id] += 1;
        }
        out
    }

    /// Indices of classes with at least one event.
    pub fn scored_classes(&self) -> Vec<usize> {
        self.class_event_counts()
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Detections of every clip at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub detections: Vec<crate::postprocess::EventList>,
}
