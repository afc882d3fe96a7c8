//! Tab-separated ground truth, detections and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{ClipTruth, GroundTruth, PsdsReport};
use crate::postprocess::{EventList, EventRecord};
use crate::{Error, Result};

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').to_string()))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect())
}

fn is_header(fields: &[&str]) -> bool {
    fields.get(1).is_some_and(|f| f.trim() == "onset") || fields.get(1).is_some_and(|f| f.trim() == "duration")
}

/// Parses `clip_id<TAB>onset<TAB>offset<TAB>class_name` rows. A header line
/// whose second column is `onset` is skipped.
fn read_event_rows(path: &Path) -> Result<Vec<(usize, String, f64, f64, String)>> {
    let mut rows = Vec::new();
    for (idx, (line_no, line)) in read_lines(path)?.into_iter().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if idx == 0 && is_header(&fields) {
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
        let onset = num(fields[1], "onset")?;
        let offset = num(fields[2], "offset")?;
        if !(onset >= 0.0 && onset < offset) {
            return Err(Error::parse(path, line_no, format!("need 0 <= onset < offset, got {onset} and {offset}")));
        }
        rows.push((line_no, fields[0].trim().to_string(), onset, offset, fields[3].trim().to_string()));
    }
    Ok(rows)
}

/// Loads ground truth plus the `clip_id<TAB>duration_seconds` sidecar.
///
/// The vocabulary is `classes` when given, otherwise the sorted set of
/// class names found in the annotation file.
pub fn read_ground_truth(events_path: &Path, durations_path: &Path, classes: Option<&[String]>) -> Result<GroundTruth> {
    let rows = read_event_rows(events_path)?;

    let mut clips: BTreeMap<String, ClipTruth> = BTreeMap::new();
    for (idx, (line_no, line)) in read_lines(durations_path)?.into_iter().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if idx == 0 && is_header(&fields) {
            continue;
        }
        if fields.len() != 2 {
            return Err(Error::parse(durations_path, line_no, "expected clip_id<TAB>duration"));
        }
        let duration: f64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(durations_path, line_no, format!("bad duration {:?}", fields[1])))?;
        if !(duration > 0.0) {
            return Err(Error::parse(durations_path, line_no, "duration must be positive"));
        }
        clips.insert(
            fields[0].trim().to_string(),
            ClipTruth {
                duration,
                events: Vec::new(),
            },
        );
    }

    let classes: Vec<String> = match classes {
        Some(c) => c.to_vec(),
        None => {
            let mut names: Vec<String> = rows.iter().map(|r| r.4.clone()).collect();
            names.sort();
            names.dedup();
            names
        }
    };
    for (line_no, clip, onset, offset, class) in rows {
        let class_id = classes
            .iter()
            .position(|c| *c == class)
            .ok_or_else(|| Error::Data(format!("{}:{line_no}: unknown class {class:?}", events_path.display())))?;
        let truth = clips.get_mut(&clip).ok_or_else(|| {
            Error::Data(format!("{}:{line_no}: clip {clip:?} has no duration entry", events_path.display()))
        })?;
        truth.events.push(EventRecord { class_id, onset, offset });
    }
    GroundTruth::new(classes, clips)
}

/// Reads one detection file into per-clip event lists; every clip of the
/// ground truth gets a list, possibly empty.
pub fn read_detections(path: &Path, gt: &GroundTruth) -> Result<Vec<EventList>> {
    let mut per_clip: BTreeMap<String, Vec<EventRecord>> =
        gt.clips.keys().map(|k| (k.clone(), Vec::new())).collect();
    for (line_no, clip, onset, offset, class) in read_event_rows(path)? {
        let class_id = gt
            .class_index(&class)
            .map_err(|e| Error::Data(format!("{}:{line_no}: {e}", path.display())))?;
        per_clip
            .get_mut(&clip)
            .ok_or_else(|| Error::Data(format!("{}:{line_no}: clip {clip:?} not in ground truth", path.display())))?
            .push(EventRecord { class_id, onset, offset });
    }
    Ok(per_clip.into_iter().map(|(id, ev)| EventList::new(id, ev)).collect())
}

/// Writes a human-readable summary to `<stem>.txt` and the per-threshold
/// table to `<stem>.tsv`.
pub fn write_report(dir: &Path, stem: &str, report: &PsdsReport) -> Result<()> {
    let mut summary = String::new();
    writeln!(summary, "PSDS: {:.4}", report.psds).unwrap();
    let p = &report.params;
    writeln!(
        summary,
        "dtc={} gtc={} cttc={} alpha_st={} alpha_ct={} e_max={}",
        p.dtc,
        p.gtc,
        p.cttc.map_or("none".to_string(), |c| c.to_string()),
        p.alpha_st,
        p.alpha_ct,
        p.e_max
    )
    .unwrap();
    for curve in &report.curves {
        writeln!(summary, "class {}: {} ROC support points", curve.class, curve.points.len()).unwrap();
        for (e, t) in &curve.points {
            writeln!(summary, "  efpr {e:.4}/h  tpr {t:.4}").unwrap();
        }
    }

    let mut table = String::from("threshold\tclass\ttp\tfp\tct\ttpr\tefpr\n");
    for row in &report.table {
        let ct: Vec<String> = row.ct.iter().map(|v| v.to_string()).collect();
        writeln!(
            table,
            "{:.4}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}",
            row.threshold,
            row.class,
            row.tp,
            row.fp,
            ct.join(","),
            row.tpr,
            row.efpr
        )
        .unwrap();
    }
    writeln!(table, "# psds\t{:.6}", report.psds).unwrap();

    let txt = dir.join(format!("{stem}.txt"));
    std::fs::write(&txt, summary).map_err(|e| Error::io(&txt, e))?;
    let tsv = dir.join(format!("{stem}.tsv"));
    std::fs::write(&tsv, table).map_err(|e| Error::io(&tsv, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_ground_truth_and_detections() {
        let dir = tempfile::tempdir().unwrap();
        let gt_path = dir.path().join("gt.tsv");
        let dur_path = dir.path().join("dur.tsv");
        std::fs::write(&gt_path, "filename\tonset\toffset\tevent_label\na\t1.0\t2.0\tDog\nb\t0.5\t3.0\tSpeech\n").unwrap();
        std::fs::write(&dur_path, "a\t10\nb\t10\nc\t5\n").unwrap();
        let gt = read_ground_truth(&gt_path, &dur_path, None).unwrap();
        assert_eq!(gt.classes, vec!["Dog", "Speech"]);
        assert_eq!(gt.dataset_duration(), 25.0);
        assert_eq!(gt.clips["a"].events[0].class_id, 0);

        let det_path = dir.path().join("det.tsv");
        std::fs::write(&det_path, "a\t1.1\t2.0\tDog\n").unwrap();
        let dets = read_detections(&det_path, &gt).unwrap();
        assert_eq!(dets.len(), 3);
        assert_eq!(dets[0].events.len(), 1);

        std::fs::write(&det_path, "a\t1.1\t2.0\tCat\n").unwrap();
        assert!(matches!(read_detections(&det_path, &gt), Err(Error::Data(_))));
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let gt_path = dir.path().join("gt.tsv");
        let dur_path = dir.path().join("dur.tsv");
        std::fs::write(&gt_path, "a\t1.0\t2.0\tDog\na\t2.0\t1.0\tDog\n").unwrap();
        std::fs::write(&dur_path, "a\t10\n").unwrap();
        match read_ground_truth(&gt_path, &dur_path, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
