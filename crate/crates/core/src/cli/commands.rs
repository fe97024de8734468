use std::collections::HashSet;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{EmbeddingChoice, RunConfig};
use crate::audio_io::{load_wav, AudioClip};
use crate::dataset::{
    augment, balance_classes, build_eval_file, convert_audioset, parse_manifest, read_label_map,
    split, write_manifest, GroundTruthTimeline, LabelSet, ManifestEntry, Ontology,
};
use crate::dataset::synth::{write_corpus, CorpusSpec};
use crate::derive_seed;
use crate::dsp::{cut_patches, export_spectrogram, MelFrontend, Patch};
use crate::embedding::{
    load_external_embeddings, read_embeddings_file, save_embeddings, FeatureVector, PatchMeta,
};
use crate::error::{Error, Result};
use crate::forest::{self, ForestModel, ModelMeta};
use crate::metrics::{report, MetricsReport, MetricsRow};
use crate::retrieval::{
    evaluate_retrieval, intervals_for_query, iou, rasterize, resolve_query, retrieve, score_clip,
    IntervalSet, Query,
};

fn base_dir(file: &Path) -> PathBuf {
    file.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn comment_block(cfg: &RunConfig) -> String {
    cfg.provenance_comments()
        .iter()
        .map(|c| format!("# {c}\n"))
        .collect()
}

/// Load, trim and, for `#augK` entries, augment the audio behind an entry.
pub fn load_entry_clip(entry: &ManifestEntry, base: &Path, cfg: &RunConfig) -> Result<AudioClip> {
    let path = entry.resolved_path(base);
    let mut clip = load_wav(&path, cfg.frontend.sample_rate_hz)?.trim(entry.start_s, entry.end_s)?;
    if entry.augmentation_index().is_some() {
        let recipe = cfg.data.augment.recipe_for(cfg.seed, &entry.clip_id)?;
        clip = augment(&clip, &recipe, derive_seed(cfg.seed, &["noise", &entry.clip_id]))?;
    }
    clip.clip_id = entry.clip_id.clone();
    Ok(clip)
}

fn entry_patches(entries: &[ManifestEntry], base: &Path, cfg: &RunConfig) -> Result<Vec<Vec<Patch>>> {
    let frontend = MelFrontend::new(&cfg.frontend)?;
    entries
        .par_iter()
        .map(|e| {
            let clip = load_entry_clip(e, base, cfg)?;
            Ok(cut_patches(&frontend.compute(&clip)?, &cfg.frontend))
        })
        .collect()
}

fn check_unique_ids(entries: &[ManifestEntry]) -> Result<()> {
    let mut seen = HashSet::new();
    for e in entries {
        if !seen.insert(e.clip_id.as_str()) {
            return Err(Error::InvalidConfig(format!("duplicate clip_id {:?} in manifest", e.clip_id)));
        }
    }
    Ok(())
}

fn load_manifest(path: &Path, ontology: &Ontology, cfg: &RunConfig) -> Result<Vec<ManifestEntry>> {
    let parsed = parse_manifest(path, ontology, cfg.data.strict_labels)?;
    if parsed.entries.is_empty() {
        return Err(Error::EmptyInput(format!("manifest {} has no usable rows", path.display())));
    }
    check_unique_ids(&parsed.entries)?;
    Ok(parsed.entries)
}

pub struct FeaturizeSummary {
    pub clips: usize,
    pub rows: usize,
    pub dimension: usize,
}

fn write_grid(path: &Path, grid: &[(PatchMeta, usize)], cfg: &RunConfig) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
    w.write_record(["clip_id", "patch_index", "start_s", "end_s", "valid_frames"])
        .map_err(csv_err)?;
    for (m, valid) in grid {
        w.write_record([
            m.clip_id.clone(),
            m.patch_index.to_string(),
            m.start_s.to_string(),
            m.end_s.to_string(),
            valid.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
    write_text(path, &(comment_block(cfg) + &body))
}

pub fn cmd_featurize(
    cfg: &RunConfig,
    manifest: &Path,
    out: &Path,
    grid_out: &Path,
) -> Result<FeaturizeSummary> {
    let ontology = cfg.ontology()?;
    let entries = load_manifest(manifest, &ontology, cfg)?;
    let patches = entry_patches(&entries, &base_dir(manifest), cfg)?;
    let grid: Vec<(PatchMeta, usize)> = patches
        .iter()
        .flatten()
        .map(|p| (PatchMeta::from(p), p.valid_frames))
        .collect();
    let (dimension, vectors) = if cfg.embedding == EmbeddingChoice::External {
        let ext = cfg.paths.embeddings.as_deref().ok_or_else(|| {
            Error::InvalidConfig("external embeddings need --embeddings <AIREMB1 file>".into())
        })?;
        let metas: Vec<PatchMeta> = grid.iter().map(|(m, _)| m.clone()).collect();
        load_external_embeddings(ext, &metas)?
    } else {
        let source = cfg.embedding_source(None)?;
        let vectors = patches
            .par_iter()
            .flatten()
            .map(|p| source.featurize(p))
            .collect::<Result<Vec<_>>>()?;
        (source.dimension, vectors)
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_embeddings(out, dimension, &vectors, &cfg.provenance_comments())?;
    write_grid(grid_out, &grid, cfg)?;
    log::info!("featurized {} clips into {} rows of dimension {dimension}", entries.len(), vectors.len());
    Ok(FeaturizeSummary {
        clips: entries.len(),
        rows: vectors.len(),
        dimension,
    })
}

pub struct TrainSummary {
    pub model: ForestModel,
    pub report: Option<MetricsReport>,
    pub train_samples: usize,
    pub augmentations: usize,
    pub holdout_clips: usize,
    pub subset_accuracy: Option<f64>,
}

/// Split originals, optionally balance the training side with augmented
/// copies, train, and score the held-out originals clip by clip.
pub fn cmd_train(
    cfg: &RunConfig,
    manifest: &Path,
    features: &Path,
    model_out: &Path,
    report_out: Option<&Path>,
) -> Result<TrainSummary> {
    let ontology = cfg.ontology()?;
    let n_classes = ontology.len();
    let entries = load_manifest(manifest, &ontology, cfg)?;
    let (dimension, vectors) = read_embeddings_file(features)?;
    let mut by_clip: IndexMap<String, Vec<FeatureVector>> = IndexMap::new();
    for v in vectors {
        by_clip.entry(v.clip_id.clone()).or_default().push(v);
    }

    let mut originals: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    for e in &entries {
        if seen.insert(e.original_id().to_string()) {
            originals.push(e.original_id().to_string());
        }
    }
    let (train_ids, eval_ids) = split(&originals, cfg.data.train_fraction, cfg.seed)?;
    let train_ids: HashSet<String> = train_ids.into_iter().collect();
    let eval_ids: HashSet<String> = eval_ids.into_iter().collect();
    let mut train_entries: Vec<ManifestEntry> = entries
        .iter()
        .filter(|e| train_ids.contains(e.original_id()))
        .cloned()
        .collect();
    let eval_entries: Vec<ManifestEntry> = entries
        .iter()
        .filter(|e| e.augmentation_index().is_none() && eval_ids.contains(e.original_id()))
        .cloned()
        .collect();

    let mut augmentations = 0;
    if let Some(target) = cfg.data.balance_target {
        for c in 0..n_classes {
            if !train_entries.iter().any(|e| e.labels.get(c)) {
                return Err(Error::DegenerateClass(ontology.name(c).to_string()));
            }
        }
        let balanced = balance_classes(&train_entries, n_classes, target, cfg.seed)?;
        augmentations = balanced.augmentations;
        let added = &balanced.entries[train_entries.len()..];
        let missing: Vec<ManifestEntry> = added
            .iter()
            .filter(|e| !by_clip.contains_key(&e.clip_id))
            .cloned()
            .collect();
        if !missing.is_empty() {
            if cfg.embedding == EmbeddingChoice::External {
                return Err(Error::InvalidConfig(
                    "balancing with external embeddings needs the augmented rows in the embeddings file"
                        .into(),
                ));
            }
            let source = cfg.embedding_source(None)?;
            let patches = entry_patches(&missing, &base_dir(manifest), cfg)?;
            let computed: Vec<Vec<FeatureVector>> = patches
                .par_iter()
                .map(|ps| ps.iter().map(|p| source.featurize(p)).collect())
                .collect::<Result<Vec<_>>>()?;
            for (e, vs) in missing.iter().zip(computed) {
                by_clip.insert(e.clip_id.clone(), vs);
            }
        }
        train_entries = balanced.entries;
        log::info!("balanced training split with {augmentations} augmented copies");
    }

    let mut rows: Vec<&[f64]> = Vec::new();
    let mut labels: Vec<LabelSet> = Vec::new();
    for e in &train_entries {
        let vs = by_clip
            .get(&e.clip_id)
            .ok_or_else(|| Error::GridMismatch(format!("no feature rows for clip {:?}", e.clip_id)))?;
        for v in vs {
            rows.push(&v.values);
            labels.push(e.labels.clone());
        }
    }
    let embedding = cfg.embedding_source(Some(dimension))?;
    if embedding.dimension != dimension {
        return Err(Error::DimensionMismatch {
            expected: embedding.dimension,
            found: dimension,
        });
    }
    let meta = ModelMeta {
        ontology: ontology.clone(),
        embedding,
        frontend_hash: cfg.frontend.fingerprint(),
        provenance: cfg.provenance(),
    };
    let model = forest::train_rows(&rows, &labels, meta, &cfg.forest, cfg.seed)?;
    if let Some(dir) = model_out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    forest::save(&model, model_out)?;
    log::info!("trained on {} samples, model written to {}", rows.len(), model_out.display());

    let mut summary = TrainSummary {
        train_samples: rows.len(),
        augmentations,
        holdout_clips: eval_entries.len(),
        report: None,
        subset_accuracy: None,
        model,
    };
    if eval_entries.is_empty() {
        log::warn!("holdout split is empty, no report written");
        return Ok(summary);
    }
    let mut probs: Vec<Vec<f64>> = Vec::with_capacity(eval_entries.len());
    for e in &eval_entries {
        let vs = by_clip
            .get(&e.clip_id)
            .ok_or_else(|| Error::GridMismatch(format!("no feature rows for clip {:?}", e.clip_id)))?;
        let mut mean = vec![0.0; n_classes];
        for v in vs {
            for (m, p) in mean.iter_mut().zip(summary.model.predict(&v.values)?) {
                *m += p / vs.len() as f64;
            }
        }
        probs.push(mean);
    }
    let t = cfg.query.threshold;
    let mut per_class = IndexMap::new();
    for c in 0..n_classes {
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        let pred: Vec<bool> = scores.iter().map(|&s| s >= t).collect();
        let truth: Vec<bool> = eval_entries.iter().map(|e| e.labels.get(c)).collect();
        per_class.insert(ontology.name(c).to_string(), MetricsRow::compute(&pred, &scores, &truth)?);
    }
    let exact = eval_entries
        .iter()
        .zip(&probs)
        .filter(|(e, p)| (0..n_classes).all(|c| (p[c] >= t) == e.labels.get(c)))
        .count();
    let subset_accuracy = exact as f64 / eval_entries.len() as f64;
    let rep = report(per_class)?;
    if let Some(base) = report_out {
        let extra = json!({
            "holdout_clips": eval_entries.len(),
            "subset_accuracy": round4(subset_accuracy),
            "train_samples": summary.train_samples,
            "augmentations": augmentations,
        });
        write_report(base, &rep, extra, cfg)?;
    }
    summary.report = Some(rep);
    summary.subset_accuracy = Some(subset_accuracy);
    Ok(summary)
}

fn round4(v: f64) -> f64 {
    format!("{v:.4}").parse().expect("formatted float parses")
}

/// `<base>.json` and `<base>.txt`, both carrying the run provenance.
pub fn write_report(base: &Path, rep: &MetricsReport, extra: Value, cfg: &RunConfig) -> Result<()> {
    let mut doc = rep.to_json();
    if let (Value::Object(d), Value::Object(x)) = (&mut doc, extra) {
        d.extend(x);
        d.insert("provenance".into(), cfg.provenance_json());
    }
    let json_path = with_suffix(base, "json");
    let text_path = with_suffix(base, "txt");
    write_text(&json_path, &(serde_json::to_string_pretty(&doc).expect("json") + "\n"))?;
    write_text(&text_path, &(comment_block(cfg) + &rep.to_text()))
}

fn with_suffix(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn load_external(cfg: &RunConfig) -> Result<Option<Vec<FeatureVector>>> {
    match &cfg.paths.embeddings {
        Some(p) if cfg.embedding == EmbeddingChoice::External => Ok(Some(read_embeddings_file(p)?.1)),
        _ => Ok(None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

fn configured_query(text: &str, model: &ForestModel, cfg: &RunConfig) -> Result<Query> {
    resolve_query(text, &model.ontology)?
        .with_threshold(cfg.query.threshold)?
        .with_filters(cfg.query.min_duration_s, cfg.query.merge_gap_s)
}

fn check_intervals(set: &IntervalSet) -> Result<()> {
    for (c, ivs) in &set.classes {
        let mut prev_end = 0.0;
        for iv in ivs {
            let ok = iv.start_s() >= prev_end
                && iv.start_cell < iv.end_cell
                && iv.end_s() <= set.duration_s + 1e-9
                && (0.0..=1.0).contains(&iv.confidence);
            if !ok {
                return Err(Error::Invariant(format!("interval list of class {c} is not ordered and disjoint")));
            }
            prev_end = iv.end_s();
        }
    }
    Ok(())
}

pub fn cmd_query(
    cfg: &RunConfig,
    audio: &Path,
    model_path: &Path,
    text: &str,
    format: OutputFormat,
) -> Result<String> {
    let model = forest::load(model_path)?;
    let query = configured_query(text, &model, cfg)?;
    let clip = load_wav(audio, cfg.frontend.sample_rate_hz)?;
    let external = load_external(cfg)?;
    let set = retrieve(&clip, &model, &query, &cfg.frontend, external.as_deref())?;
    check_intervals(&set)?;
    Ok(match format {
        OutputFormat::Csv => set.to_csv(&model.ontology, &cfg.provenance_comments()),
        OutputFormat::Json => {
            let mut doc = set.to_json(&model.ontology);
            doc["query"] = json!({
                "text": text,
                "classes": query.classes.iter().map(|&c| model.ontology.name(c)).collect::<Vec<_>>(),
                "threshold": query.threshold,
                "min_duration_s": query.min_duration_s,
                "merge_gap_s": query.merge_gap_s,
            });
            doc["provenance"] = cfg.provenance_json();
            serde_json::to_string_pretty(&doc).expect("json") + "\n"
        }
    })
}

pub struct EvalOutcome {
    pub report: MetricsReport,
    /// Cell-level IoU per queried class, in query order.
    pub iou: IndexMap<String, f64>,
    pub intervals: IntervalSet,
}

/// Cell-level evaluation of the queried classes on a labelled recording.
/// Decisions use the raw thresholded cells; the interval filters only shape
/// the emitted interval list.
pub fn cmd_eval(
    cfg: &RunConfig,
    audio: &Path,
    truth_path: &Path,
    model_path: &Path,
    keywords: &[String],
    report_out: Option<&Path>,
) -> Result<EvalOutcome> {
    let model = forest::load(model_path)?;
    let clip = load_wav(audio, cfg.frontend.sample_rate_hz)?;
    let truth = GroundTruthTimeline::read_csv(truth_path, &model.ontology, clip.duration_seconds())?;
    let mut classes: Vec<usize> = Vec::new();
    for k in keywords {
        for c in configured_query(k, &model, cfg)?.classes {
            if !classes.contains(&c) {
                classes.push(c);
            }
        }
    }
    if classes.is_empty() {
        return Err(Error::EmptyInput("no keywords given".into()));
    }
    let external = load_external(cfg)?;
    let preds = score_clip(&clip, &model, &cfg.frontend, external.as_deref())?;
    let timelines = rasterize(&preds, clip.duration_seconds(), cfg.query.threshold)?;
    let selected: Vec<_> = classes.iter().map(|&c| timelines[c].clone()).collect();
    let rep = evaluate_retrieval(&selected, &truth, &model.ontology)?;
    let ious: IndexMap<String, f64> = classes
        .iter()
        .map(|&c| (model.ontology.name(c).to_string(), iou(&timelines[c].cells, &truth.cells[c])))
        .collect();
    let query = Query {
        text: keywords.join(" "),
        classes: classes.clone(),
        threshold: cfg.query.threshold,
        min_duration_s: cfg.query.min_duration_s,
        merge_gap_s: cfg.query.merge_gap_s,
    };
    let intervals = intervals_for_query(&timelines, &query, clip.duration_seconds());
    check_intervals(&intervals)?;
    if let Some(base) = report_out {
        let iou_json: serde_json::Map<String, Value> =
            ious.iter().map(|(k, v)| (k.clone(), json!(round4(*v)))).collect();
        write_report(base, &rep, json!({ "iou": iou_json, "n_cells": truth.n_cells }), cfg)?;
        write_text(
            &with_suffix(base, "intervals.csv"),
            &intervals.to_csv(&model.ontology, &cfg.provenance_comments()),
        )?;
    }
    Ok(EvalOutcome {
        report: rep,
        iou: ious,
        intervals,
    })
}

pub struct MkevalSummary {
    pub duration_s: f64,
    pub n_cells: usize,
    pub truth: GroundTruthTimeline,
}

/// Segment list CSV: `path,start_s,end_s,labels`, paths relative to the
/// list's directory, labels pipe-separated.
pub fn read_segments(path: &Path, ontology: &Ontology, cfg: &RunConfig) -> Result<Vec<(AudioClip, LabelSet)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::MalformedRow { line: 1, reason: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    if header != ["path", "start_s", "end_s", "labels"] {
        return Err(Error::MalformedRow {
            line: 1,
            reason: "expected header path,start_s,end_s,labels".into(),
        });
    }
    let base = base_dir(path);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::MalformedRow { line: 0, reason: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let malformed = |reason: String| Error::MalformedRow { line, reason };
        if rec.len() != 4 {
            return Err(malformed(format!("expected 4 fields, found {}", rec.len())));
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| malformed(format!("bad number {:?}", &rec[i])));
        let (start, end) = (num(1)?, num(2)?);
        let mut labels = LabelSet::empty(ontology.len());
        for l in rec[3].split('|').map(str::trim).filter(|l| !l.is_empty()) {
            let c = ontology
                .resolve_label(l)
                .ok_or_else(|| Error::UnknownClassStrict { line, label: l.to_string() })?;
            labels.set(c, true);
        }
        let p = base.join(&rec[0]);
        let clip = load_wav(&p, cfg.frontend.sample_rate_hz)?.trim(start, end)?;
        out.push((clip, labels));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!("{} lists no segments", path.display())));
    }
    Ok(out)
}

pub fn cmd_mkeval(
    cfg: &RunConfig,
    segments: &Path,
    gap_s: f64,
    out_wav: &Path,
    truth_out: &Path,
    spectrogram_out: &Path,
) -> Result<MkevalSummary> {
    let ontology = cfg.ontology()?;
    let segs = read_segments(segments, &ontology, cfg)?;
    if let Some(dir) = out_wav.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let (clip, truth) = build_eval_file(&segs, gap_s, out_wav)?;
    truth.write_csv(truth_out, &ontology, &cfg.provenance_comments())?;
    let spec = MelFrontend::new(&cfg.frontend)?.compute(&clip)?;
    export_spectrogram(&spec, spectrogram_out)?;
    Ok(MkevalSummary {
        duration_s: clip.duration_seconds(),
        n_cells: truth.n_cells,
        truth,
    })
}

pub fn cmd_convert_audioset(
    cfg: &RunConfig,
    segments: &Path,
    label_map: &Path,
    audio_dir: &Path,
    out: &Path,
) -> Result<(usize, usize)> {
    let ontology = cfg.ontology()?;
    let map = read_label_map(label_map)?;
    let f = std::fs::File::open(segments).map_err(|e| Error::io(segments, e))?;
    let converted = convert_audioset(f, &map, audio_dir, &ontology)?;
    write_manifest(out, &converted.entries, &ontology)?;
    Ok((converted.entries.len(), converted.skipped))
}

pub fn cmd_synth(
    cfg: &RunConfig,
    out_dir: &Path,
    per_class: usize,
    background: usize,
    clip_seconds: f64,
) -> Result<usize> {
    let ontology = cfg.ontology()?;
    let spec = CorpusSpec {
        per_class,
        background,
        clip_seconds,
        sample_rate_hz: cfg.frontend.sample_rate_hz,
        seed: cfg.seed,
    };
    let entries = write_corpus(out_dir, &spec, ontology.len())?;
    write_manifest(&out_dir.join("manifest.csv"), &entries, &ontology)?;
    Ok(entries.len())
}
