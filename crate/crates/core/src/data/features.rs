use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::DatasetManifest;
use crate::audio::{
    apply_stats, extract_features, fit_stats, read_feature_cache, read_wav, write_feature_cache, FeatureStats,
    SpectralMap,
};
use crate::postprocess::EventRecord;
use crate::train::{StrongClip, TrainingData, WeakClip};
use crate::{Error, Result};

const FEATURE_SUBDIR: &str = "features";
const STATS_FILE: &str = "stats.json";
const DURATIONS_FILE: &str = "durations.tsv";

/// Cache file name of a clip; path separators are flattened.
pub fn feature_file_name(clip: &str) -> String {
    format!("{}.feat", clip.replace(['/', '\\'], "__"))
}

/// What [`extract_dataset`] wrote.
#[derive(Debug, Clone)]
pub struct ExtractSummary {
    pub clips: usize,
    pub max_frames: usize,
    pub index: PathBuf,
    pub stats: FeatureStats,
}

/// `clip<TAB>duration` rows with an optional `filename<TAB>duration`
/// header.
pub fn read_durations(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if i == 0 && fields.get(1).is_some_and(|f| f.trim() == "duration") {
            continue;
        }
        let duration = match fields.as_slice() {
            [_, d] => d.trim().parse::<f64>().ok().filter(|d| *d > 0.0),
            _ => None,
        };
        let duration = duration.ok_or_else(|| Error::parse(path, i + 1, "expected clip<TAB>positive duration"))?;
        out.insert(fields[0].trim().to_string(), duration);
    }
    Ok(out)
}

fn extract_one(manifest: &DatasetManifest, clip: &str) -> Result<(SpectralMap, f64)> {
    let wave = read_wav(&manifest.clip_path(clip))?;
    let duration = wave.duration_seconds();
    Ok((extract_features(&wave, clip)?, duration))
}

/// Extracts log-mel features of every clip in `manifest` (in parallel over
/// the available cores), standardizes them with `stats` or with statistics
/// fitted on the whole manifest, and writes the feature set to `out`.
pub fn extract_dataset(manifest: &DatasetManifest, out: &Path, stats: Option<FeatureStats>) -> Result<ExtractSummary> {
    let clips = manifest.all_clips();
    if clips.is_empty() {
        return Err(Error::Data("manifest lists no clips".into()));
    }
    manifest.check_paths()?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(clips.len());
    let chunk = clips.len().div_ceil(workers);
    let raw: Vec<(SpectralMap, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = clips
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|c| extract_one(manifest, c)).collect::<Result<Vec<_>>>()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("extraction worker panicked"))
            .collect::<Result<Vec<_>>>()
            .map(|v| v.into_iter().flatten().collect())
    })?;

    let stats = match stats {
        Some(s) => s,
        None => fit_stats(&raw.iter().map(|(m, _)| m.clone()).collect::<Vec<_>>())?,
    };
    let feat_dir = out.join(FEATURE_SUBDIR);
    std::fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    let mut durations = String::from("filename\tduration\n");
    let mut max_frames = 0;
    for (map, duration) in &raw {
        let normed = apply_stats(map, &stats)?;
        write_feature_cache(&feat_dir.join(feature_file_name(&map.clip_id)), &normed)?;
        writeln!(durations, "{}\t{duration}", map.clip_id).unwrap();
        max_frames = max_frames.max(map.n_frames);
    }
    let put = |name: &str, text: String| {
        let p = out.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    put(DURATIONS_FILE, durations)?;
    put(STATS_FILE, serde_json::to_string_pretty(&stats).expect("stats serialize"))?;

    let mut copy = manifest.clone();
    copy.audio_dir = std::path::absolute(&manifest.audio_dir).map_err(|e| Error::io(&manifest.audio_dir, e))?;
    let index = copy.write(out)?;
    Ok(ExtractSummary { clips: raw.len(), max_frames, index, stats })
}

/// A directory written by [`extract_dataset`], loaded into memory.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub manifest: DatasetManifest,
    /// Standardized features by clip id.
    pub maps: BTreeMap<String, SpectralMap>,
    pub durations: BTreeMap<String, f64>,
    pub stats: FeatureStats,
}

pub fn load_feature_set(dir: &Path) -> Result<FeatureSet> {
    let manifest = DatasetManifest::load(&dir.join("dataset.toml"), false)?;
    let durations = read_durations(&dir.join(DURATIONS_FILE))?;
    let stats_path = dir.join(STATS_FILE);
    let stats_text = std::fs::read_to_string(&stats_path).map_err(|e| Error::io(&stats_path, e))?;
    let stats: FeatureStats = serde_json::from_str(&stats_text)
        .map_err(|e| Error::Data(format!("{}: {e}", stats_path.display())))?;
    let mut maps = BTreeMap::new();
    for clip in manifest.all_clips() {
        let map = read_feature_cache(&dir.join(FEATURE_SUBDIR).join(feature_file_name(&clip)))?;
        if !durations.contains_key(&clip) {
            return Err(Error::Data(format!("clip {clip:?} has no duration entry")));
        }
        maps.insert(clip, map);
    }
    Ok(FeatureSet { manifest, maps, durations, stats })
}

impl FeatureSet {
    /// Clip ids in manifest order.
    pub fn clips(&self) -> Vec<String> {
        self.manifest.all_clips()
    }

    /// Splits the set into the three training pools with class ids.
    pub fn training_data(&self) -> Result<TrainingData> {
        let m = &self.manifest;
        let map = |clip: &str| {
            self.maps
                .get(clip)
                .cloned()
                .ok_or_else(|| Error::Data(format!("no features for clip {clip:?}")))
        };
        let weak = m
            .weak
            .iter()
            .map(|r| {
                let labels = r.labels.iter().map(|l| m.class_index(l)).collect::<Result<Vec<_>>>()?;
                Ok(WeakClip { features: map(&r.clip)?, labels })
            })
            .collect::<Result<Vec<_>>>()?;
        let strong = m
            .strong_clips()
            .into_iter()
            .map(|(clip, rows)| {
                let events = rows
                    .iter()
                    .map(|r| EventRecord::new(m.class_index(&r.label)?, r.onset, r.offset))
                    .collect::<Result<Vec<_>>>()?;
                Ok(StrongClip { features: map(&clip)?, events })
            })
            .collect::<Result<Vec<_>>>()?;
        let unlabeled = m.unlabeled.iter().map(|c| map(c)).collect::<Result<Vec<_>>>()?;
        Ok(TrainingData { n_classes: m.classes.len(), weak, strong, unlabeled })
    }
}
