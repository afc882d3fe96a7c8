use serde::Serialize;

use super::matching::{match_operating_point, rates, ClassRates, OperatingPointCounts};
use super::{GroundTruth, OperatingPoint, PsdsParams};
use crate::{Error, Result};

/// Pareto-filtered ROC support of one class: effective FPR strictly
/// increasing, TPR strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassCurve {
    pub class: String,
    /// `(efpr per hour, tpr)` pairs.
    pub points: Vec<(f64, f64)>,
}

impl ClassCurve {
    fn from_points(class: String, mut raw: Vec<(f64, f64)>) -> Self {
        raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
        let mut points: Vec<(f64, f64)> = Vec::new();
        for (e, t) in raw {
            if points.last().is_none_or(|&(_, best)| t > best) {
                points.push((e, t));
            }
        }
        Self { class, points }
    }

    /// Best TPR among operating points with effective FPR `<= e`; zero if
    /// there is none. Non-decreasing and right-continuous in `e`.
    pub fn support(&self, e: f64) -> f64 {
        let n = self.points.partition_point(|&(x, _)| x <= e);
        if n == 0 {
            0.0
        } else {
            self.points[n - 1].1
        }
    }
}

/// One line of the machine-readable report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub threshold: f64,
    pub class: String,
    pub tp: usize,
    pub fp: usize,
    pub ct: Vec<usize>,
    pub tpr: f64,
    pub efpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsdsReport {
    pub psds: f64,
    pub params: PsdsParams,
    pub curves: Vec<ClassCurve>,
    pub table: Vec<TableRow>,
}

/// Counts and rates of one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPointRates {
    pub counts: OperatingPointCounts,
    pub rates: Vec<ClassRates>,
}

fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Scores per-class `(efpr, tpr)` operating points.
///
/// The effective TPR is a step function of `e` that only changes where some
/// class reaches a new support point, so the normalized area is summed
/// exactly segment by segment.
pub fn psd_roc(per_class: Vec<(String, Vec<(f64, f64)>)>, params: &PsdsParams) -> Result<PsdsReport> {
    params.validate()?;
    if per_class.is_empty() {
        return Err(Error::Data("no scored classes".into()));
    }
    if per_class.iter().any(|(_, pts)| pts.is_empty()) {
        return Err(Error::InvalidInput("every class needs at least one operating point".into()));
    }
    let curves: Vec<ClassCurve> = per_class
        .into_iter()
        .map(|(name, pts)| ClassCurve::from_points(name, pts))
        .collect();

    let mut breaks: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.0))
        .filter(|&e| e > 0.0 && e < params.e_max)
        .collect();
    breaks.push(0.0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    breaks.push(params.e_max);

    let mut area = 0.0;
    let mut supports = vec![0.0; curves.len()];
    for w in breaks.windows(2) {
        for (s, c) in supports.iter_mut().zip(&curves) {
            *s = c.support(w[0]);
        }
        let (mean, std) = mean_and_population_std(&supports);
        let mu = (mean - params.alpha_st * std).max(0.0);
        area += mu * (w[1] - w[0]);
    }

    Ok(PsdsReport {
        psds: (area / params.e_max).clamp(0.0, 1.0),
        params: *params,
        curves,
        table: Vec::new(),
    })
}

/// Matches every operating point, converts counts to rates and scores the
/// resulting curves.
pub fn evaluate(points: &[OperatingPoint], gt: &GroundTruth, params: &PsdsParams) -> Result<PsdsReport> {
    params.validate()?;
    if points.is_empty() {
        return Err(Error::InvalidInput("evaluation needs at least one threshold".into()));
    }
    let scored = gt.scored_classes();
    if scored.is_empty() {
        return Err(Error::Data("ground truth has no annotated events".into()));
    }

    let per_threshold: Vec<OperatingPointRates> = points
        .iter()
        .map(|op| {
            let counts = match_operating_point(op.threshold, &op.detections, gt, params)?;
            let rates = rates(&counts, gt, params)?;
            Ok(OperatingPointRates { counts, rates })
        })
        .collect::<Result<_>>()?;

    let per_class = scored
        .iter()
        .map(|&c| {
            let pts = per_threshold
                .iter()
                .map(|op| (op.rates[c].efpr, op.rates[c].tpr))
                .collect();
            (gt.classes[c].clone(), pts)
        })
        .collect();
    let mut report = psd_roc(per_class, params)?;

    for op in &per_threshold {
        for (c, class) in gt.classes.iter().enumerate() {
            report.table.push(TableRow {
                threshold: op.counts.threshold,
                class: class.clone(),
                tp: op.counts.tp[c],
                fp: op.counts.fp[c],
                ct: op.counts.ct[c].clone(),
                tpr: op.rates[c].tpr,
                efpr: op.rates[c].efpr,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class(name: &str, pts: &[(f64, f64)]) -> (String, Vec<(f64, f64)>) {
        (name.to_string(), pts.to_vec())
    }

    #[test]
    fn perfect_detection_scores_one() {
        let r = psd_roc(vec![class("a", &[(0.0, 1.0)]), class("b", &[(0.0, 1.0)])], &PsdsParams::scenario1()).unwrap();
        assert_eq!(r.psds, 1.0);
    }

    #[test]
    fn nothing_detected_scores_zero() {
        let r = psd_roc(vec![class("a", &[(0.0, 0.0), (0.0, 0.0)])], &PsdsParams::scenario2()).unwrap();
        assert_eq!(r.psds, 0.0);
    }

    #[test]
    fn two_class_constant_support_scores_half() {
        let r = psd_roc(vec![class("a", &[(0.0, 1.0)]), class("b", &[(0.0, 0.5)])], &PsdsParams::scenario1()).unwrap();
        assert!((r.psds - 0.5).abs() < 1e-15);
    }

    #[test]
    fn step_integral_is_exact() {
        // TPR 0 until 25/h, 0.6 until 75/h, then 1.0
        let r = psd_roc(vec![class("a", &[(25.0, 0.6), (75.0, 1.0), (150.0, 1.0)])], &PsdsParams::scenario1()).unwrap();
        let expected = (0.6 * 50.0 + 1.0 * 25.0) / 100.0;
        assert!((r.psds - expected).abs() < 1e-15);
    }

    #[test]
    fn support_is_monotone_and_right_continuous() {
        let c = ClassCurve::from_points("a".into(), vec![(10.0, 0.5), (5.0, 0.2), (20.0, 0.4), (30.0, 0.9)]);
        assert_eq!(c.points, vec![(5.0, 0.2), (10.0, 0.5), (30.0, 0.9)]);
        assert_eq!(c.support(4.999), 0.0);
        assert_eq!(c.support(5.0), 0.2);
        assert_eq!(c.support(25.0), 0.5);
        assert_eq!(c.support(30.0), 0.9);
    }

    #[test]
    fn instability_cost_is_clamped_at_zero() {
        let mut p = PsdsParams::scenario1();
        p.alpha_st = 10.0;
        let r = psd_roc(vec![class("a", &[(0.0, 1.0)]), class("b", &[(0.0, 0.0)])], &p).unwrap();
        assert_eq!(r.psds, 0.0);
    }
}
