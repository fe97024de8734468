//! Handcrafted evaluation recordings and their ground-truth timelines.

use std::io::Write as _;
use std::path::Path;

use super::ontology::{LabelSet, Ontology};
use crate::audio_io::{write_wav, AudioClip};
use crate::dsp::GRID_CELL_S;
use crate::error::{Error, Result};
use crate::util::fmt_sig;

/// Number of 0.01 s cells spanning `duration_s`.
pub fn grid_len(duration_s: f64) -> usize {
    (duration_s / GRID_CELL_S).round() as usize
}

pub fn seconds_to_cell(t: f64) -> usize {
    (t / GRID_CELL_S).round().max(0.0) as usize
}

/// Per-class binary arrays on the 0.01 s grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthTimeline {
    pub cells: Vec<Vec<bool>>,
    pub n_cells: usize,
}

impl GroundTruthTimeline {
    pub fn empty(n_classes: usize, n_cells: usize) -> Self {
        GroundTruthTimeline {
            cells: vec![vec![false; n_cells]; n_classes],
            n_cells,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.n_cells as f64 * GRID_CELL_S
    }

    pub fn mark(&mut self, class: usize, start_s: f64, end_s: f64) {
        let a = seconds_to_cell(start_s).min(self.n_cells);
        let b = seconds_to_cell(end_s).min(self.n_cells);
        self.cells[class][a..b].fill(true);
    }

    /// Maximal labelled runs as `(class, start_s, end_s)`, class-major.
    pub fn intervals(&self) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for (c, row) in self.cells.iter().enumerate() {
            let mut i = 0;
            while i < row.len() {
                if row[i] {
                    let start = i;
                    while i < row.len() && row[i] {
                        i += 1;
                    }
                    out.push((c, start as f64 * GRID_CELL_S, i as f64 * GRID_CELL_S));
                } else {
                    i += 1;
                }
            }
        }
        out
    }

    /// `class,start_s,end_s` rows preceded by `#` provenance comments, the
    /// first of which records the file duration.
    pub fn write_csv(&self, path: &Path, ontology: &Ontology, comments: &[String]) -> Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "# duration_s={}", fmt_sig(self.duration_s(), 12)).expect("vec write");
        for c in comments {
            writeln!(buf, "# {c}").expect("vec write");
        }
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let to_err = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
            w.write_record(["class", "start_s", "end_s"]).map_err(to_err)?;
            for (c, s, e) in self.intervals() {
                w.write_record([ontology.name(c), &format!("{s:.2}"), &format!("{e:.2}")])
                    .map_err(to_err)?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Read a truth CSV for a recording of `duration_s`. A recorded duration
    /// that disagrees by more than one cell, or an interval past the end, is
    /// a `LengthMismatch`.
    pub fn read_csv(path: &Path, ontology: &Ontology, duration_s: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let n_cells = grid_len(duration_s);
        for line in text.lines().filter(|l| l.starts_with('#')) {
            if let Some(v) = line.trim_start_matches('#').trim().strip_prefix("duration_s=") {
                let recorded: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::MalformedFile(format!("bad duration comment {line:?}")))?;
                let recorded_cells = grid_len(recorded);
                if recorded_cells.abs_diff(n_cells) > 1 {
                    return Err(Error::LengthMismatch {
                        left: recorded_cells,
                        right: n_cells,
                    });
                }
            }
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut truth = GroundTruthTimeline::empty(ontology.len(), n_cells);
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::MalformedFile(e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let malformed = |reason: String| Error::MalformedRow { line, reason };
            if rec.len() != 3 {
                return Err(malformed(format!("expected 3 fields, found {}", rec.len())));
            }
            let class = ontology
                .resolve_label(&rec[0])
                .ok_or_else(|| malformed(format!("unknown class {:?}", &rec[0])))?;
            let s: f64 = rec[1].trim().parse().map_err(|_| malformed("bad start_s".into()))?;
            let e: f64 = rec[2].trim().parse().map_err(|_| malformed("bad end_s".into()))?;
            if !(s >= 0.0 && s < e) {
                return Err(malformed(format!("bad interval [{s}, {e})")));
            }
            let end_cell = seconds_to_cell(e);
            if end_cell > n_cells + 1 {
                return Err(Error::LengthMismatch {
                    left: end_cell,
                    right: n_cells,
                });
            }
            truth.mark(class, s, e);
        }
        Ok(truth)
    }
}

/// Concatenate `segments` with `gap_s` of silence before each segment and
/// after the last one, write the result to `out_path` as PCM16 WAV and return
/// it with its exact ground truth.
pub fn build_eval_file(
    segments: &[(AudioClip, LabelSet)],
    gap_s: f64,
    out_path: &Path,
) -> Result<(AudioClip, GroundTruthTimeline)> {
    let (clip, truth) = assemble_eval_clip(segments, gap_s)?;
    write_wav(&clip, out_path)?;
    Ok((clip, truth))
}

pub fn assemble_eval_clip(
    segments: &[(AudioClip, LabelSet)],
    gap_s: f64,
) -> Result<(AudioClip, GroundTruthTimeline)> {
    let Some((first, first_labels)) = segments.first() else {
        return Err(Error::EmptyInput("no segments for evaluation file".into()));
    };
    if !(gap_s >= 0.0 && gap_s.is_finite()) {
        return Err(Error::InvalidConfig(format!("gap {gap_s} s must be >= 0")));
    }
    let rate = first.sample_rate_hz;
    let n_classes = first_labels.len();
    let gap = (gap_s * rate as f64).round() as usize;
    let mut samples = Vec::new();
    let mut spans = Vec::new();
    for (clip, labels) in segments {
        if clip.sample_rate_hz != rate || labels.len() != n_classes {
            return Err(Error::InvalidConfig(
                "segments must share sample rate and ontology".into(),
            ));
        }
        samples.extend(std::iter::repeat_n(0.0, gap));
        let start = samples.len();
        samples.extend(clip.samples.iter().map(|s| s.clamp(-1.0, 1.0)));
        spans.push((start, samples.len(), labels));
    }
    samples.extend(std::iter::repeat_n(0.0, gap));

    let clip = AudioClip::new("eval", samples, rate);
    let mut truth = GroundTruthTimeline::empty(n_classes, grid_len(clip.duration_seconds()));
    for (a, b, labels) in spans {
        for c in labels.ones() {
            truth.mark(c, a as f64 / rate as f64, b as f64 / rate as f64);
        }
    }
    Ok((clip, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(seconds: f64, class: usize) -> (AudioClip, LabelSet) {
        let n = (seconds * 16000.0) as usize;
        (
            AudioClip::new("s", vec![0.25; n], 16000),
            LabelSet::from_indices(6, &[class]),
        )
    }

    #[test]
    fn forty_one_second_layout() {
        let segs = vec![seg(10.0, 4), seg(10.0, 5), seg(10.0, 2)];
        let (clip, truth) = assemble_eval_clip(&segs, 2.75).unwrap();
        assert!((clip.duration_seconds() - 41.0).abs() < 1e-9);
        assert_eq!(truth.n_cells, 4100);
        assert!(truth.cells.iter().all(|r| r.len() == 4100));
        let cat = &truth.cells[4];
        assert!(!cat[274] && cat[275] && cat[1274] && !cat[1275]);
        // gaps are unlabelled everywhere
        for i in (0..275).chain(1275..1550).chain(3825..4100) {
            assert!(truth.cells.iter().all(|r| !r[i]));
        }
        let labelled: usize = truth.cells.iter().map(|r| r.iter().filter(|&&b| b).count()).sum();
        assert_eq!(labelled, 3000);
    }

    #[test]
    fn single_segment_without_gap() {
        let (_, truth) = assemble_eval_clip(&[seg(1.0, 0)], 0.0).unwrap();
        assert_eq!(truth.n_cells, 100);
        assert!(truth.cells[0].iter().all(|&b| b));
    }

    #[test]
    fn no_segments() {
        assert!(matches!(assemble_eval_clip(&[], 1.0), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn truth_csv_roundtrip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let o = Ontology::default_six();
        let (clip, truth) = build_eval_file(&[seg(1.0, 2), seg(0.5, 4)], 0.5, &dir.path().join("e.wav")).unwrap();
        let p = dir.path().join("truth.csv");
        truth.write_csv(&p, &o, &["tool test".into()]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"Gunshot, gunfire\",0.50,1.50"));
        let back = GroundTruthTimeline::read_csv(&p, &o, clip.duration_seconds()).unwrap();
        assert_eq!(back, truth);
        assert!(matches!(
            GroundTruthTimeline::read_csv(&p, &o, 10.0),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
