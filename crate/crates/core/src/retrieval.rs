//! From patch probabilities to per-class timelines, intervals and keyword
//! queries.

use indexmap::IndexMap;
use serde_json::{json, Value};

use crate::audio_io::AudioClip;
use crate::dataset::{grid_len, normalize_tokens, seconds_to_cell, GroundTruthTimeline, Ontology};
use crate::dsp::{cut_patches, FrontendConfig, MelFrontend, GRID_CELL_S};
use crate::embedding::{check_grid, EmbeddingKind, FeatureVector, PatchMeta};
use crate::error::{Error, Result};
use crate::forest::{ForestModel, PatchPrediction};
use crate::metrics::{report, MetricsReport, MetricsRow};

/// Cells past the last patch that may still borrow its probability. The
/// STFT stops up to one window short of the clip end, so the final few
/// cells are never covered by a frame.
pub const TAIL_SLACK_CELLS: usize = 5;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MIN_DURATION_S: f64 = 0.2;
pub const DEFAULT_MERGE_GAP_S: f64 = 0.1;

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassTimeline {
    pub class_index: usize,
    pub cells: Vec<bool>,
    pub probs: Vec<f64>,
    pub threshold: f64,
}

impl ClassTimeline {
    pub fn from_probs(class_index: usize, probs: Vec<f64>, threshold: f64) -> Self {
        ClassTimeline {
            class_index,
            cells: probs.iter().map(|&p| p >= threshold).collect(),
            probs,
            threshold,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn rethreshold(&self, threshold: f64) -> Self {
        Self::from_probs(self.class_index, self.probs.clone(), threshold)
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("threshold {threshold} outside (0, 1)")))
    }
}

/// One timeline per class. Every cell takes the probability of the patch
/// covering it; patches must arrive in order and must not overlap.
pub fn rasterize(
    predictions: &[PatchPrediction],
    duration_s: f64,
    threshold: f64,
) -> Result<Vec<ClassTimeline>> {
    check_threshold(threshold)?;
    let n_cells = grid_len(duration_s);
    let Some(first) = predictions.first() else {
        return Err(Error::CoverageGap {
            first_cell: 0,
            end_cell: n_cells,
        });
    };
    let n_classes = first.probabilities.len();
    let mut owner: Vec<Option<usize>> = vec![None; n_cells];
    let mut prev_end = 0;
    for (k, p) in predictions.iter().enumerate() {
        if p.probabilities.len() != n_classes {
            return Err(Error::DimensionMismatch {
                expected: n_classes,
                found: p.probabilities.len(),
            });
        }
        let a = seconds_to_cell(p.start_s);
        let b = seconds_to_cell(p.end_s).min(n_cells);
        if a < prev_end || seconds_to_cell(p.end_s) <= a {
            return Err(Error::GridMismatch(format!(
                "patch {} of {:?} overlaps its predecessor or is empty",
                p.patch_index, p.clip_id
            )));
        }
        for o in owner.iter_mut().take(b).skip(a) {
            *o = Some(k);
        }
        prev_end = seconds_to_cell(p.end_s);
    }
    let covered_end = owner.iter().rposition(Option::is_some).map_or(0, |i| i + 1);
    if n_cells > covered_end && n_cells - covered_end <= TAIL_SLACK_CELLS && covered_end > 0 {
        let last = owner[covered_end - 1];
        owner[covered_end..].fill(last);
    }
    if let Some(gap) = owner.iter().position(Option::is_none) {
        let end = owner[gap..]
            .iter()
            .position(Option::is_some)
            .map_or(n_cells, |i| gap + i);
        return Err(Error::CoverageGap {
            first_cell: gap,
            end_cell: end,
        });
    }
    Ok((0..n_classes)
        .map(|c| {
            let probs = owner
                .iter()
                .map(|o| predictions[o.expect("coverage checked")].probabilities[c])
                .collect();
            ClassTimeline::from_probs(c, probs, threshold)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start_cell: usize,
    pub end_cell: usize,
    pub confidence: f64,
}

impl Interval {
    pub fn start_s(&self) -> f64 {
        self.start_cell as f64 * GRID_CELL_S
    }

    pub fn end_s(&self) -> f64 {
        self.end_cell as f64 * GRID_CELL_S
    }

    pub fn duration_s(&self) -> f64 {
        (self.end_cell - self.start_cell) as f64 * GRID_CELL_S
    }
}

/// Runs of 1-cells, merged across gaps shorter than `merge_gap_s`, then
/// filtered to at least `min_duration_s`.
pub fn extract_intervals(
    timeline: &ClassTimeline,
    min_duration_s: f64,
    merge_gap_s: f64,
) -> Vec<Interval> {
    let cells = &timeline.cells;
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < cells.len() {
        if !cells[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < cells.len() && cells[i] {
            i += 1;
        }
        match runs.last_mut() {
            Some(last) if ((start - last.1) as f64 * GRID_CELL_S) < merge_gap_s - TOL => {
                last.1 = i;
            }
            _ => runs.push((start, i)),
        }
    }
    runs.into_iter()
        .filter(|&(a, b)| (b - a) as f64 * GRID_CELL_S >= min_duration_s - TOL)
        .map(|(a, b)| {
            let mean = timeline.probs[a..b].iter().sum::<f64>() / (b - a) as f64;
            Interval {
                start_cell: a,
                end_cell: b,
                confidence: mean.clamp(0.0, 1.0),
            }
        })
        .collect()
}

pub fn intervals_to_cells(intervals: &[Interval], n_cells: usize) -> Vec<bool> {
    let mut cells = vec![false; n_cells];
    for iv in intervals {
        cells[iv.start_cell.min(n_cells)..iv.end_cell.min(n_cells)].fill(true);
    }
    cells
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub text: String,
    pub classes: Vec<usize>,
    pub threshold: f64,
    pub min_duration_s: f64,
    pub merge_gap_s: f64,
}

impl Query {
    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        self.threshold = threshold;
        Ok(self)
    }

    pub fn with_filters(mut self, min_duration_s: f64, merge_gap_s: f64) -> Result<Self> {
        if !(min_duration_s >= 0.0 && merge_gap_s >= 0.0) {
            return Err(Error::InvalidConfig(
                "min_duration and merge_gap must be non-negative".into(),
            ));
        }
        self.min_duration_s = min_duration_s;
        self.merge_gap_s = merge_gap_s;
        Ok(self)
    }
}

/// Every token is looked up in the class-name tokens and the alias table;
/// all matching classes are kept.
pub fn resolve_query(text: &str, ontology: &Ontology) -> Result<Query> {
    let tokens = normalize_tokens(text);
    let mut hits = vec![false; ontology.len()];
    for tok in &tokens {
        for (c, name) in ontology.names().iter().enumerate() {
            if normalize_tokens(name).contains(tok) {
                hits[c] = true;
            }
        }
        if let Some(c) = ontology.alias(tok) {
            hits[c] = true;
        }
    }
    let classes: Vec<usize> = (0..hits.len()).filter(|&c| hits[c]).collect();
    if classes.is_empty() {
        return Err(Error::NoMatch {
            query: text.to_string(),
            known: ontology.names().join("; "),
        });
    }
    Ok(Query {
        text: text.to_string(),
        classes,
        threshold: DEFAULT_THRESHOLD,
        min_duration_s: DEFAULT_MIN_DURATION_S,
        merge_gap_s: DEFAULT_MERGE_GAP_S,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet {
    pub duration_s: f64,
    /// `(class index, intervals)` in query order.
    pub classes: Vec<(usize, Vec<Interval>)>,
}

impl IntervalSet {
    pub fn to_csv(&self, ontology: &Ontology, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            for line in c.lines() {
                out.push_str(&format!("# {line}\n"));
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["class", "start_s", "end_s", "confidence"])
            .expect("writing to memory");
        for (c, ivs) in &self.classes {
            for iv in ivs {
                w.write_record([
                    ontology.name(*c).to_string(),
                    format!("{:.3}", iv.start_s()),
                    format!("{:.3}", iv.end_s()),
                    format!("{:.3}", iv.confidence),
                ])
                .expect("writing to memory");
            }
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf-8"));
        out
    }

    pub fn to_json(&self, ontology: &Ontology) -> Value {
        let classes: serde_json::Map<String, Value> = self
            .classes
            .iter()
            .map(|(c, ivs)| {
                let list: Vec<Value> = ivs
                    .iter()
                    .map(|iv| {
                        json!({
                            "start_s": round3(iv.start_s()),
                            "end_s": round3(iv.end_s()),
                            "confidence": round3(iv.confidence),
                        })
                    })
                    .collect();
                (ontology.name(*c).to_string(), Value::from(list))
            })
            .collect();
        json!({ "duration_s": round3(self.duration_s), "classes": classes })
    }
}

fn round3(v: f64) -> f64 {
    format!("{v:.3}").parse().expect("formatted float parses")
}

/// The patch grid and features the model expects for `clip`.
pub fn clip_features(
    clip: &AudioClip,
    model: &ForestModel,
    frontend: &FrontendConfig,
) -> Result<(Vec<PatchMeta>, Option<Vec<FeatureVector>>)> {
    if model.frontend_hash != frontend.fingerprint() {
        return Err(Error::FrontendMismatch {
            model: model.frontend_hash,
            current: frontend.fingerprint(),
        });
    }
    let spec = MelFrontend::new(frontend)?.compute(clip)?;
    let patches = cut_patches(&spec, frontend);
    let grid = patches.iter().map(PatchMeta::from).collect();
    if model.embedding.kind == EmbeddingKind::ExternalFile {
        return Ok((grid, None));
    }
    let feats = patches
        .iter()
        .map(|p| model.embedding.featurize(p))
        .collect::<Result<Vec<_>>>()?;
    Ok((grid, Some(feats)))
}

/// Per-patch probabilities for a clip, from builtin features or, for models
/// trained on external embeddings, from `external` checked against the grid.
pub fn score_clip(
    clip: &AudioClip,
    model: &ForestModel,
    frontend: &FrontendConfig,
    external: Option<&[FeatureVector]>,
) -> Result<Vec<PatchPrediction>> {
    let (grid, builtin) = clip_features(clip, model, frontend)?;
    let feats: Vec<FeatureVector> = match (builtin, external) {
        (_, Some(ext)) => {
            check_grid(ext, &grid)?;
            ext.to_vec()
        }
        (Some(b), None) => b,
        (None, None) => {
            return Err(Error::InvalidConfig(
                "model was trained on external embeddings; supply an embeddings file".into(),
            ))
        }
    };
    feats.iter().map(|f| model.predict_patch(f)).collect()
}

pub fn intervals_for_query(timelines: &[ClassTimeline], query: &Query, duration_s: f64) -> IntervalSet {
    IntervalSet {
        duration_s,
        classes: query
            .classes
            .iter()
            .map(|&c| (c, extract_intervals(&timelines[c], query.min_duration_s, query.merge_gap_s)))
            .collect(),
    }
}

pub fn retrieve(
    clip: &AudioClip,
    model: &ForestModel,
    query: &Query,
    frontend: &FrontendConfig,
    external: Option<&[FeatureVector]>,
) -> Result<IntervalSet> {
    let preds = score_clip(clip, model, frontend, external)?;
    let timelines = rasterize(&preds, clip.duration_seconds(), query.threshold)?;
    Ok(intervals_for_query(&timelines, query, clip.duration_seconds()))
}

/// Cell-level metrics for each predicted timeline against the truth.
pub fn evaluate_retrieval(
    predicted: &[ClassTimeline],
    truth: &GroundTruthTimeline,
    ontology: &Ontology,
) -> Result<MetricsReport> {
    let mut rows = IndexMap::new();
    for t in predicted {
        if t.len() != truth.n_cells {
            return Err(Error::LengthMismatch {
                left: t.len(),
                right: truth.n_cells,
            });
        }
        let gold = truth.cells.get(t.class_index).ok_or_else(|| {
            Error::InvalidConfig(format!("class {} not in the ground truth", t.class_index))
        })?;
        rows.insert(
            ontology.name(t.class_index).to_string(),
            MetricsRow::compute(&t.cells, &t.probs, gold)?,
        );
    }
    report(rows)
}

/// Intersection over union of two cell sets; 1 when both are empty.
pub fn iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
