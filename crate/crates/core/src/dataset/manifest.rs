//! Local-path manifest CSV: `clip_id,path,start_s,end_s,labels`.
//!
//! Labels are pipe-separated class names. An empty labels field marks a
//! background clip (a negative for every class); labels that resolve to no
//! class are skipped in lenient mode and abort parsing in strict mode.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ontology::{LabelSet, Ontology};
use crate::error::{Error, Result};
use crate::util::fmt_sig;

pub const MANIFEST_HEADER: [&str; 5] = ["clip_id", "path", "start_s", "end_s", "labels"];
const AUG_MARKER: &str = "#aug";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub path: PathBuf,
    pub start_s: f64,
    pub end_s: f64,
    pub labels: LabelSet,
}

impl ManifestEntry {
    /// Clip id with any `#augK` suffix removed.
    pub fn original_id(&self) -> &str {
        match self.clip_id.rfind(AUG_MARKER) {
            Some(pos) => &self.clip_id[..pos],
            None => &self.clip_id,
        }
    }

    /// `K` for entries produced by class balancing.
    pub fn augmentation_index(&self) -> Option<u32> {
        let pos = self.clip_id.rfind(AUG_MARKER)?;
        self.clip_id[pos + AUG_MARKER.len()..].parse().ok()
    }

    pub fn is_background(&self) -> bool {
        self.labels.count() == 0
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.clip_id.is_empty() {
            return Err("empty clip_id".into());
        }
        if self.path.as_os_str().is_empty() {
            return Err("empty path".into());
        }
        if !(self.start_s.is_finite() && self.end_s.is_finite()) || self.start_s < 0.0 {
            return Err("start_s/end_s must be finite and non-negative".into());
        }
        if self.start_s >= self.end_s {
            return Err(format!("start_s {} >= end_s {}", self.start_s, self.end_s));
        }
        Ok(())
    }

    /// Relative paths are resolved against `base` (the manifest's directory).
    pub fn resolved_path(&self, base: &Path) -> PathBuf {
        if self.path.is_absolute() {
            self.path.clone()
        } else {
            base.join(&self.path)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedManifest {
    pub entries: Vec<ManifestEntry>,
    /// Rows dropped because none of their labels is in the ontology.
    pub skipped: usize,
}

pub fn parse_manifest(path: &Path, ontology: &Ontology, strict: bool) -> Result<ParsedManifest> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest_from(file, ontology, strict)
}

pub fn parse_manifest_from<R: std::io::Read>(
    reader: R,
    ontology: &Ontology,
    strict: bool,
) -> Result<ParsedManifest> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::MalformedRow {
        line: 1,
        reason: e.to_string(),
    })?;
    let header: Vec<&str> = header.iter().map(str::trim).collect();
    if header != MANIFEST_HEADER {
        return Err(Error::MalformedRow {
            line: 1,
            reason: format!("expected header {}", MANIFEST_HEADER.join(",")),
        });
    }

    let mut entries = Vec::new();
    let mut skipped = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::MalformedRow {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let malformed = |reason: String| Error::MalformedRow { line, reason };
        if rec.len() != MANIFEST_HEADER.len() {
            return Err(malformed(format!("expected 5 fields, found {}", rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| malformed(format!("{}: {e}", MANIFEST_HEADER[i])))
        };
        let (start_s, end_s) = (num(2)?, num(3)?);

        let mut labels = LabelSet::empty(ontology.len());
        let raw_labels: Vec<&str> = rec[4]
            .split('|')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        for label in &raw_labels {
            match ontology.resolve_label(label) {
                Some(i) => labels.set(i, true),
                None if strict => {
                    return Err(Error::UnknownClassStrict {
                        line,
                        label: label.to_string(),
                    })
                }
                None => {}
            }
        }
        if !raw_labels.is_empty() && labels.count() == 0 {
            skipped += 1;
            continue;
        }
        let entry = ManifestEntry {
            clip_id: rec[0].trim().to_string(),
            path: PathBuf::from(rec[1].trim()),
            start_s,
            end_s,
            labels,
        };
        entry.validate().map_err(malformed)?;
        entries.push(entry);
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} manifest rows without a recognised label");
    }
    Ok(ParsedManifest { entries, skipped })
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry], ontology: &Ontology) -> Result<()> {
    let mut buf = Vec::new();
    write_manifest_to(&mut buf, entries, ontology)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_manifest_to<W: std::io::Write>(
    writer: W,
    entries: &[ManifestEntry],
    ontology: &Ontology,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::io("<manifest>", std::io::Error::other(e.to_string()));
    w.write_record(MANIFEST_HEADER).map_err(to_err)?;
    for e in entries {
        let labels: Vec<&str> = e.labels.ones().map(|i| ontology.name(i)).collect();
        w.write_record([
            e.clip_id.as_str(),
            &e.path.to_string_lossy(),
            &fmt_sig(e.start_s, 12),
            &fmt_sig(e.end_s, 12),
            &labels.join("|"),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io("<manifest>", e))
}
