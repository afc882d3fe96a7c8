//! Dataset manifests, feature sets on disk and the synthetic corpus
//! generator.

mod features;
mod manifest;
mod synth;

pub use features::{
    extract_dataset, feature_file_name, load_feature_set, read_durations, ExtractSummary, FeatureSet,
};
pub use manifest::{
    parse_classes, parse_strong, parse_unlabeled, parse_weak, DatasetManifest, ManifestFiles, StrongRow, WeakRow,
};
pub use synth::{synth_dataset, SourceKind, SynthOutput, SynthSource, SynthSpec};
