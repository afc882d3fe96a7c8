//! Glue between trained models, detection files and scoring.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::data::FeatureSet;
use crate::model::CrnnModel;
use crate::nn::Tensor;
use crate::postprocess::{decode, detection_file_name, write_detections, EventList, PredictionMatrix, ThresholdKey};
use crate::psds::{evaluate, read_detections, GroundTruth, OperatingPoint, PsdsParams, PsdsReport};
use crate::{Error, Result, N_MELS};

/// Frame probabilities of every clip in the feature set, in manifest
/// order.
pub fn predict_feature_set(model: &mut CrnnModel, features: &FeatureSet) -> Result<Vec<PredictionMatrix>> {
    let dt = model.preset.frame_duration();
    features
        .clips()
        .into_iter()
        .map(|clip| {
            let map = &features.maps[&clip];
            let x = Tensor::new(&[1, 1, map.n_frames, N_MELS], map.values.clone())?;
            let out = model.predict(&x)?;
            let [_, t_out, c] = out.frame_probs.dims::<3>("frame probabilities")?;
            PredictionMatrix::new(clip.clone(), t_out, c, out.frame_probs.data, dt, features.durations[&clip])
        })
        .collect()
}

/// Decodes every clip with the model's preset and writes one detection
/// file per threshold into `out`. Returns the written paths.
pub fn write_detection_dir(
    model: &CrnnModel,
    predictions: &[PredictionMatrix],
    class_names: &[String],
    out: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut by_threshold: BTreeMap<ThresholdKey, Vec<EventList>> = BTreeMap::new();
    for pred in predictions {
        for (tau, events) in decode(pred, &model.preset)? {
            by_threshold.entry(tau).or_default().push(events);
        }
    }
    by_threshold
        .into_iter()
        .map(|(tau, lists)| {
            let path = out.join(detection_file_name(tau.0));
            write_detections(&path, &lists, class_names)?;
            Ok(path)
        })
        .collect()
}

/// Threshold encoded in a `detections_<tau>.tsv` file name.
pub fn parse_detection_file_name(name: &str) -> Option<f64> {
    name.strip_prefix("detections_")?.strip_suffix(".tsv")?.parse().ok()
}

/// Reads every `detections_<tau>.tsv` in `dir`, ordered by threshold.
pub fn read_detection_dir(dir: &Path, gt: &GroundTruth) -> Result<Vec<OperatingPoint>> {
    let mut points = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        if let Some(threshold) = name.to_str().and_then(parse_detection_file_name) {
            points.push(OperatingPoint { threshold, detections: read_detections(&entry.path(), gt)? });
        }
    }
    if points.is_empty() {
        return Err(Error::Data(format!("no detections_<threshold>.tsv files in {}", dir.display())));
    }
    points.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));
    Ok(points)
}

pub fn evaluate_detection_dir(dir: &Path, gt: &GroundTruth, params: &PsdsParams) -> Result<PsdsReport> {
    evaluate(&read_detection_dir(dir, gt)?, gt, params)
}
