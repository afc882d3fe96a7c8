use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A clip with clip-level labels.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakRow {
    pub clip: String,
    /// Class names in vocabulary order, without duplicates.
    pub labels: Vec<String>,
}

/// One annotated event of a strongly labeled clip.
#[derive(Debug, Clone, PartialEq)]
pub struct StrongRow {
    pub clip: String,
    pub onset: f64,
    pub offset: f64,
    pub label: String,
}

/// The file locations of a dataset, as stored in its `dataset.toml`.
/// Relative paths are resolved against the directory of that file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFiles {
    pub classes: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strong: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unlabeled: Option<PathBuf>,
    /// Directory the clip paths are relative to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_dir: Option<PathBuf>,
}

/// Weakly labeled, strongly labeled and unlabeled clips over a fixed class
/// vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub weak: Vec<WeakRow>,
    pub strong: Vec<StrongRow>,
    pub unlabeled: Vec<String>,
    /// Absolute or caller-relative directory holding the audio.
    pub audio_dir: PathBuf,
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// One class name per line.
pub fn parse_classes(text: &str, path: &Path) -> Result<Vec<String>> {
    let mut classes: Vec<String> = Vec::new();
    for (line_no, line) in lines(text) {
        let name = line.trim();
        if name.contains(['\t', ',']) {
            return Err(Error::parse(path, line_no, format!("class name {name:?} contains a tab or comma")));
        }
        if classes.iter().any(|c| c == name) {
            return Err(Error::parse(path, line_no, format!("duplicate class {name:?}")));
        }
        classes.push(name.to_string());
    }
    if classes.is_empty() {
        return Err(Error::Data(format!("{}: empty class vocabulary", path.display())));
    }
    Ok(classes)
}

fn check_class(classes: &[String], name: &str, path: &Path, line_no: usize) -> Result<()> {
    if classes.iter().any(|c| c == name) {
        Ok(())
    } else {
        Err(Error::Data(format!("{}:{line_no}: unknown class {name:?}", path.display())))
    }
}

/// `clip<TAB>label,label,...` rows; an optional `filename<TAB>event_labels`
/// header is skipped.
pub fn parse_weak(text: &str, path: &Path, classes: &[String]) -> Result<Vec<WeakRow>> {
    let mut rows = Vec::new();
    for (idx, (line_no, line)) in lines(text).enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if idx == 0 && fields.get(1).is_some_and(|f| f.trim() == "event_labels") {
            continue;
        }
        if fields.len() != 2 || fields[0].trim().is_empty() {
            return Err(Error::parse(path, line_no, "expected clip<TAB>comma,separated,labels"));
        }
        let mut labels = Vec::new();
        for name in fields[1].split(',').map(str::trim).filter(|s| !s.is_empty()) {
            check_class(classes, name, path, line_no)?;
            labels.push(name.to_string());
        }
        labels.sort_by_key(|l| classes.iter().position(|c| c == l));
        labels.dedup();
        rows.push(WeakRow { clip: fields[0].trim().to_string(), labels });
    }
    Ok(rows)
}

/// `clip<TAB>onset<TAB>offset<TAB>label` rows; an optional header whose
/// second column is `onset` is skipped.
pub fn parse_strong(text: &str, path: &Path, classes: &[String]) -> Result<Vec<StrongRow>> {
    let mut rows = Vec::new();
    for (idx, (line_no, line)) in lines(text).enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if idx == 0 && fields.get(1).is_some_and(|f| f.trim() == "onset") {
            continue;
        }
        if fields.len() != 4 {
            return Err(Error::parse(path, line_no, format!("expected 4 tab-separated fields, got {}", fields.len())));
        }
        let num = |s: &str, what: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(path, line_no, format!("{what} {s:?} is not a number")))
        };
        let (onset, offset) = (num(fields[1], "onset")?, num(fields[2], "offset")?);
        if !(onset >= 0.0 && onset < offset && offset.is_finite()) {
            return Err(Error::parse(path, line_no, format!("need 0 <= onset < offset, got {onset} and {offset}")));
        }
        let label = fields[3].trim();
        check_class(classes, label, path, line_no)?;
        rows.push(StrongRow { clip: fields[0].trim().to_string(), onset, offset, label: label.to_string() });
    }
    Ok(rows)
}

/// One clip per line; an optional `filename` header is skipped.
pub fn parse_unlabeled(text: &str, path: &Path) -> Result<Vec<String>> {
    let mut rows = Vec::new();
    for (idx, (line_no, line)) in lines(text).enumerate() {
        let clip = line.trim();
        if idx == 0 && clip == "filename" {
            continue;
        }
        if clip.contains('\t') {
            return Err(Error::parse(path, line_no, "expected a single clip path"));
        }
        rows.push(clip.to_string());
    }
    Ok(rows)
}

impl DatasetManifest {
    /// Reads a `dataset.toml` and the files it names. With `check_audio`,
    /// every referenced clip must exist under the audio directory.
    pub fn load(index: &Path, check_audio: bool) -> Result<Self> {
        let base = index.parent().unwrap_or(Path::new("."));
        let files: ManifestFiles =
            toml::from_str(&read(index)?).map_err(|e| Error::Config(format!("{}: {e}", index.display())))?;
        let resolve = |p: &Path| base.join(p);
        let classes_path = resolve(&files.classes);
        let classes = parse_classes(&read(&classes_path)?, &classes_path)?;
        let weak = match &files.weak {
            Some(p) => parse_weak(&read(&resolve(p))?, &resolve(p), &classes)?,
            None => Vec::new(),
        };
        let strong = match &files.strong {
            Some(p) => parse_strong(&read(&resolve(p))?, &resolve(p), &classes)?,
            None => Vec::new(),
        };
        let unlabeled = match &files.unlabeled {
            Some(p) => parse_unlabeled(&read(&resolve(p))?, &resolve(p))?,
            None => Vec::new(),
        };
        let audio_dir = files.audio_dir.as_deref().map_or_else(|| base.to_path_buf(), resolve);
        let manifest = Self { classes, weak, strong, unlabeled, audio_dir };
        if check_audio {
            manifest.check_paths()?;
        }
        Ok(manifest)
    }

    pub fn clip_path(&self, clip: &str) -> PathBuf {
        self.audio_dir.join(clip)
    }

    pub fn check_paths(&self) -> Result<()> {
        for clip in self.all_clips() {
            let p = self.clip_path(&clip);
            if !p.is_file() {
                return Err(Error::Data(format!("clip {clip:?} not found at {}", p.display())));
            }
        }
        Ok(())
    }

    /// Strongly labeled clips in order of first appearance with their rows.
    pub fn strong_clips(&self) -> Vec<(String, Vec<&StrongRow>)> {
        let mut out: Vec<(String, Vec<&StrongRow>)> = Vec::new();
        for row in &self.strong {
            match out.iter_mut().find(|(c, _)| *c == row.clip) {
                Some((_, rows)) => rows.push(row),
                None => out.push((row.clip.clone(), vec![row])),
            }
        }
        out
    }

    /// Every distinct clip, weak first, then strong, then unlabeled.
    pub fn all_clips(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        self.weak
            .iter()
            .map(|r| r.clip.clone())
            .chain(self.strong_clips().into_iter().map(|(c, _)| c))
            .chain(self.unlabeled.iter().cloned())
            .filter(|c| seen.insert(c.clone()))
            .collect()
    }

    /// `(weak clips, strong clips, unlabeled clips)`.
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.weak.len(), self.strong_clips().len(), self.unlabeled.len())
    }

    pub fn class_index(&self, name: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Data(format!("unknown class {name:?}")))
    }

    pub fn format_classes(&self) -> String {
        self.classes.iter().map(|c| format!("{c}\n")).collect()
    }

    pub fn format_weak(&self) -> String {
        let mut out = String::from("filename\tevent_labels\n");
        for r in &self.weak {
            writeln!(out, "{}\t{}", r.clip, r.labels.join(",")).unwrap();
        }
        out
    }

    pub fn format_strong(&self) -> String {
        let mut out = String::from("filename\tonset\toffset\tevent_label\n");
        for r in &self.strong {
            writeln!(out, "{}\t{}\t{}\t{}", r.clip, r.onset, r.offset, r.label).unwrap();
        }
        out
    }

    pub fn format_unlabeled(&self) -> String {
        let mut out = String::from("filename\n");
        for c in &self.unlabeled {
            writeln!(out, "{c}").unwrap();
        }
        out
    }

    /// Writes `dataset.toml`, `classes.txt`, `weak.tsv`, `strong.tsv` and
    /// `unlabeled.tsv` into `dir` and returns the index path. The audio
    /// directory is recorded as given.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        put("classes.txt", self.format_classes())?;
        put("weak.tsv", self.format_weak())?;
        put("strong.tsv", self.format_strong())?;
        put("unlabeled.tsv", self.format_unlabeled())?;
        let files = ManifestFiles {
            classes: "classes.txt".into(),
            weak: Some("weak.tsv".into()),
            strong: Some("strong.tsv".into()),
            unlabeled: Some("unlabeled.tsv".into()),
            audio_dir: Some(self.audio_dir.clone()),
        };
        let index = dir.join("dataset.toml");
        put("dataset.toml", toml::to_string(&files).expect("manifest index serializes"))?;
        Ok(index)
    }
}
