//! Conversion from AudioSet segment CSVs to the local manifest format.
//!
//! AudioSet rows look like `YTID, start_seconds, end_seconds, "mid1,mid2"`
//! with `#` comment lines. Label MIDs are mapped to display names through
//! `class_labels_indices.csv` (`index,mid,display_name`). Audio is expected
//! at `<audio_dir>/<YTID>.wav`, holding the full source media.

use std::collections::HashMap;
use std::path::Path;

use super::manifest::ManifestEntry;
use super::ontology::{LabelSet, Ontology};
use crate::error::{Error, Result};

pub fn read_label_map(path: &Path) -> Result<HashMap<String, String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::MalformedFile(format!("{}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::MalformedFile(e.to_string()))?;
        if rec.len() < 3 {
            return Err(Error::MalformedFile(format!(
                "label map row has {} fields, expected index,mid,display_name",
                rec.len()
            )));
        }
        map.insert(rec[1].to_string(), rec[2].to_string());
    }
    Ok(map)
}

pub struct Converted {
    pub entries: Vec<ManifestEntry>,
    pub skipped: usize,
}

pub fn convert_audioset<R: std::io::Read>(
    mut segments: R,
    label_map: &HashMap<String, String>,
    audio_dir: &Path,
    ontology: &Ontology,
) -> Result<Converted> {
    let mut text = String::new();
    segments.read_to_string(&mut text)
        .map_err(|e| Error::MalformedFile(e.to_string()))?;
    let mut entries = Vec::new();
    let mut skipped = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let malformed = |reason: String| Error::MalformedRow { line, reason };
        // the label field is quoted and itself comma-separated
        let fields: Vec<&str> = raw.splitn(4, ',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(malformed(format!("expected 4 fields, found {}", fields.len())));
        }
        let rec = [fields[0], fields[1], fields[2], fields[3].trim_matches('"')];
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| malformed(format!("bad number {:?}", rec[i])))
        };
        let (start_s, end_s) = (num(1)?, num(2)?);
        let mut labels = LabelSet::empty(ontology.len());
        for mid in rec[3].split(',').map(str::trim) {
            if let Some(c) = label_map.get(mid).and_then(|name| ontology.index_of(name)) {
                labels.set(c, true);
            }
        }
        if labels.count() == 0 {
            skipped += 1;
            continue;
        }
        let id = rec[0];
        let entry = ManifestEntry {
            clip_id: format!("{id}_{}", (start_s * 1000.0).round() as i64),
            path: audio_dir.join(format!("{id}.wav")),
            start_s,
            end_s,
            labels,
        };
        entry.validate().map_err(malformed)?;
        entries.push(entry);
    }
    Ok(Converted { entries, skipped })
}
