//! Oracles and property checks shared by the integration tests and the
//! acceptance runner.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use air::audio_io::AudioClip;
use air::dataset::{augment, split, train_size, AugmentStep, LabelSet, Ontology};
use air::dsp::{cut_patches, frame_count, FrontendConfig, MelFrontend, MelSpectrogram};
use air::embedding::{EmbeddingKind, EmbeddingSource};
use air::forest::{ForestModel, ForestParams, ModelMeta};
use air::metrics::{self, ConfusionCounts};
use air::retrieval::{extract_intervals, intervals_to_cells, rasterize, ClassTimeline};
use air::forest::PatchPrediction;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = std::result::Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let held: bool = $cond;
        if !held {
            return Err(format!($($fmt)+));
        }
    };
}

// ---------------------------------------------------------------- metrics

/// Cell-by-cell tally.
pub fn oracle_confusion(pred: &[bool], truth: &[bool]) -> (u64, u64, u64, u64) {
    let mut tp = 0;
    let mut fp = 0;
    let mut tn = 0;
    let mut fn_ = 0;
    for i in 0..pred.len() {
        if pred[i] && truth[i] {
            tp += 1;
        } else if pred[i] {
            fp += 1;
        } else if truth[i] {
            fn_ += 1;
        } else {
            tn += 1;
        }
    }
    (tp, fp, tn, fn_)
}

/// Exhaustive pairwise Mann–Whitney count.
pub fn oracle_auc(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        if !truth[i] {
            continue;
        }
        for j in 0..scores.len() {
            if truth[j] {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn close_opt(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => close(x, y, tol),
        (None, None) => true,
        _ => false,
    }
}

/// One (pred, truth) pair against the direct formulas.
pub fn check_counts_metrics(pred: &[bool], truth: &[bool]) -> Check {
    let (tp, fp, tn, fn_) = oracle_confusion(pred, truth);
    let c = metrics::confusion(pred, truth).map_err(|e| e.to_string())?;
    ensure!(c == ConfusionCounts { tp, fp, tn, fn_ }, "confusion {c:?}");
    let [tp, fp, tn, fn_] = [tp, fp, tn, fn_].map(|v| v as f64);
    let total = tp + fp + tn + fn_;
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    let mcc = if den == 0.0 { 0.0 } else { (tp * tn - fp * fn_) / den.sqrt() };
    let prec = (tp + fp > 0.0).then(|| tp / (tp + fp));
    let rec = (tp + fn_ > 0.0).then(|| tp / (tp + fn_));
    let f1 = match (prec, rec) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    ensure!(close(metrics::mcc(&c), mcc, 1e-12), "mcc {} vs {mcc}", metrics::mcc(&c));
    ensure!(metrics::accuracy(&c) == (tp + tn) / total, "accuracy");
    ensure!(close_opt(metrics::precision(&c), prec, 1e-12), "precision");
    ensure!(close_opt(metrics::recall(&c), rec, 1e-12), "recall");
    ensure!(close_opt(metrics::f1(&c), f1, 1e-12), "f1");
    let m = metrics::mcc(&c);
    ensure!((-1.0..=1.0).contains(&m), "mcc out of range");
    for v in [Some(metrics::accuracy(&c)), metrics::precision(&c), metrics::recall(&c), metrics::f1(&c)]
        .into_iter()
        .flatten()
    {
        ensure!((0.0..=1.0).contains(&v), "metric {v} out of [0, 1]");
    }
    Ok(())
}

pub fn check_auc(scores: &[f64], truth: &[bool]) -> Check {
    match (metrics::roc_auc(scores, truth), oracle_auc(scores, truth)) {
        (Ok(a), Some(b)) => {
            ensure!(close(a, b, 1e-12), "auc {a} vs pairwise {b}");
            ensure!((0.0..=1.0).contains(&a), "auc out of range");
            Ok(())
        }
        (Err(air::Error::OneClassOnly), None) => Ok(()),
        (a, b) => Err(format!("auc disagreement {a:?} vs {b:?}")),
    }
}

/// `n` random (pred, truth) pairs and `n` random score vectors, lengths up
/// to 1000, with coarse score grids so ties are common.
pub fn metric_oracle_suite(seed: u64, n: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n {
        let len = rng.random_range(1..=1000);
        let p_true = rng.random_range(0.0..1.0);
        let truth: Vec<bool> = (0..len).map(|_| rng.random_bool(p_true)).collect();
        let p_pred = rng.random_range(0.0..1.0);
        let pred: Vec<bool> = (0..len).map(|_| rng.random_bool(p_pred)).collect();
        check_counts_metrics(&pred, &truth)?;
    }
    for _ in 0..n {
        let len = rng.random_range(2..=1000);
        let p_true = rng.random_range(0.05..0.95);
        let truth: Vec<bool> = (0..len).map(|_| rng.random_bool(p_true)).collect();
        let levels = rng.random_range(2..200u32);
        let scores: Vec<f64> = (0..len)
            .map(|_| rng.random_range(0..levels) as f64 / levels as f64)
            .collect();
        check_auc(&scores, &truth)?;
    }
    Ok(())
}

pub fn check_auc_invariances(scores: &[f64], truth: &[bool], perm_seed: u64) -> Check {
    let Ok(base) = metrics::roc_auc(scores, truth) else {
        return Ok(());
    };
    let transformed: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 3.0).collect();
    let t = metrics::roc_auc(&transformed, truth).unwrap();
    ensure!(close(t, base, 1e-12), "monotone transform changed auc {base} -> {t}");
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    use rand::seq::SliceRandom;
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
    let ps: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
    let pt: Vec<bool> = idx.iter().map(|&i| truth[i]).collect();
    let p = metrics::roc_auc(&ps, &pt).unwrap();
    ensure!(close(p, base, 1e-12), "permutation changed auc {base} -> {p}");
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).all(|w| w[0] != w[1]) {
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let n = metrics::roc_auc(&neg, truth).unwrap();
        ensure!(close(base + n, 1.0, 1e-12), "auc + auc(-s) = {}", base + n);
    }
    Ok(())
}

// ---------------------------------------------------------------- dsp

pub fn tone(freq_hz: f64, amplitude: f64, seconds: f64, rate: u32) -> AudioClip {
    let n = (seconds * rate as f64).round() as usize;
    let samples = (0..n)
        .map(|i| amplitude * (2.0 * std::f64::consts::PI * freq_hz * i as f64 / rate as f64).sin())
        .collect();
    AudioClip::new("tone", samples, rate)
}

pub fn check_framing(n: usize, window: usize, hop: usize) -> Check {
    let mut brute = 0;
    let mut start = 0;
    while start + window <= n {
        brute += 1;
        start += hop;
    }
    let got = frame_count(n, window, hop);
    ensure!(got == brute, "frame_count({n}, {window}, {hop}) = {got}, sliding counter {brute}");
    Ok(())
}

/// Every frame's loudest band is the one centred nearest the tone, ±1.
pub fn check_tone_argmax(freq_hz: f64) -> Check {
    let cfg = FrontendConfig::default();
    let fe = MelFrontend::new(&cfg).map_err(|e| e.to_string())?;
    let spec = fe.compute(&tone(freq_hz, 0.5, 1.0, cfg.sample_rate_hz)).map_err(|e| e.to_string())?;
    let centers = fe.filterbank().center_hz();
    let nearest = (0..centers.len())
        .min_by(|&a, &b| (centers[a] - freq_hz).abs().total_cmp(&(centers[b] - freq_hz).abs()))
        .unwrap();
    for t in 0..spec.n_frames {
        let row = spec.frame(t);
        let arg = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        ensure!(
            arg.abs_diff(nearest) <= 1,
            "frame {t}: argmax band {arg}, nearest to {freq_hz} Hz is {nearest}"
        );
    }
    Ok(())
}

/// Doubling the amplitude of a 0 dBFS tone (0.5 → 1.0) adds 2·ln 2 to every
/// log-mel entry carrying real energy.
pub fn check_gain_shift() -> Check {
    let cfg = FrontendConfig::default();
    let fe = MelFrontend::new(&cfg).map_err(|e| e.to_string())?;
    let quiet = fe.compute(&tone(440.0, 0.5, 1.0, cfg.sample_rate_hz)).map_err(|e| e.to_string())?;
    let loud = fe.compute(&tone(440.0, 1.0, 1.0, cfg.sample_rate_hz)).map_err(|e| e.to_string())?;
    let target = 2.0 * std::f64::consts::LN_2;
    let mut checked = 0;
    for (q, l) in quiet.values.iter().zip(&loud.values) {
        if *q < (1e-2f64).ln() {
            continue;
        }
        checked += 1;
        ensure!(((l - q) - target).abs() <= 1e-3, "shift {} vs {target}", l - q);
    }
    ensure!(checked >= quiet.n_frames, "only {checked} high-energy entries");
    Ok(())
}

/// Cutting into patches and concatenating the real frames restores the
/// spectrogram exactly.
pub fn check_patch_roundtrip(rows: &[Vec<f64>], patch_frames: usize) -> Check {
    let spec = MelSpectrogram::from_rows(rows, 0.01, "p");
    let cfg = FrontendConfig {
        patch_frames,
        n_mels: spec.n_mels,
        ..FrontendConfig::default()
    };
    let patches = cut_patches(&spec, &cfg);
    ensure!(patches.len() == rows.len().div_ceil(patch_frames), "patch count");
    let mut back = Vec::new();
    for p in &patches {
        for i in 0..p.valid_frames {
            back.push(p.frame(i).to_vec());
        }
        for i in p.valid_frames..p.patch_frames {
            ensure!(p.frame(i).iter().all(|&v| v == 0.0), "padding is not zero");
        }
    }
    ensure!(back == rows, "concatenated patches differ from the spectrogram");
    Ok(())
}

// ---------------------------------------------------------------- forest

pub fn meta(n_classes: usize, d: usize) -> ModelMeta {
    ModelMeta {
        ontology: Ontology::new((0..n_classes).map(|c| format!("class{c}"))).unwrap(),
        embedding: EmbeddingSource {
            kind: EmbeddingKind::ExternalFile,
            dimension: d,
            descriptor: "test".into(),
        },
        frontend_hash: 1,
        provenance: "test".into(),
    }
}

/// Gaussian blobs, one centre per class plus a background blob, with
/// distinct coordinates so the data are consistent.
pub fn blobs(n: usize, d: usize, n_classes: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<LabelSet>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..=n_classes)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % (n_classes + 1);
        xs.push(centres[k].iter().map(|c| c + rng.random_range(-1.5..1.5)).collect());
        ys.push(if k < n_classes {
            LabelSet::from_indices(n_classes, &[k])
        } else {
            LabelSet::empty(n_classes)
        });
    }
    (xs, ys)
}

pub fn train(xs: &[Vec<f64>], ys: &[LabelSet], params: &ForestParams, seed: u64) -> ForestModel {
    let rows: Vec<&[f64]> = xs.iter().map(|r| r.as_slice()).collect();
    air::forest::train_rows(&rows, ys, meta(ys[0].len(), xs[0].len()), params, seed).unwrap()
}

pub fn model_bytes(m: &ForestModel) -> Vec<u8> {
    let mut b = Vec::new();
    air::forest::write_model(m, &mut b).unwrap();
    b
}

pub fn forest_suite() -> Check {
    let (xs, ys) = blobs(300, 8, 3, 11);
    let params = ForestParams {
        n_trees: 100,
        ..ForestParams::default()
    };
    let a = train(&xs, &ys, &params, 5);
    let b = train(&xs, &ys, &params, 5);
    ensure!(model_bytes(&a) == model_bytes(&b), "two seeded runs differ");

    let single = ForestParams {
        n_trees: 1,
        bootstrap: false,
        max_depth: None,
        ..ForestParams::default()
    };
    let m = train(&xs, &ys, &single, 9);
    for (x, y) in xs.iter().zip(&ys) {
        let p = m.predict(x).map_err(|e| e.to_string())?;
        for (c, pc) in p.iter().enumerate() {
            ensure!((*pc >= 0.5) == y.get(c), "single tree misclassifies a training point");
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let queries: Vec<Vec<f64>> = (0..1000)
        .map(|_| (0..8).map(|_| rng.random_range(-4.0..4.0)).collect())
        .collect();
    for q in &queries[..100] {
        let p = a.predict(q).map_err(|e| e.to_string())?;
        for (c, trees) in a.ensembles.iter().enumerate() {
            let mut sum = 0.0;
            for t in trees {
                sum += t.predict(q);
            }
            let avg = sum / trees.len() as f64;
            ensure!((p[c] - avg).abs() <= 1e-12, "ensemble {} vs tree average {avg}", p[c]);
        }
    }

    let bytes = model_bytes(&a);
    let back = air::forest::read_model(bytes.as_slice()).map_err(|e| e.to_string())?;
    for q in &queries {
        let (p, r) = (a.predict(q).unwrap(), back.predict(q).unwrap());
        ensure!(
            p.iter().zip(&r).all(|(x, y)| x.to_bits() == y.to_bits()),
            "prediction changed after save/load"
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- retrieval

pub fn preds_from(probs: &[f64], patch_cells: usize) -> Vec<PatchPrediction> {
    probs
        .iter()
        .enumerate()
        .map(|(k, &p)| PatchPrediction {
            probabilities: vec![p],
            clip_id: "t".into(),
            patch_index: k,
            start_s: (k * patch_cells) as f64 * 0.01,
            end_s: ((k + 1) * patch_cells) as f64 * 0.01,
        })
        .collect()
}

pub fn check_timeline_roundtrip(probs: &[f64], patch_cells: usize, threshold: f64) -> Check {
    let preds = preds_from(probs, patch_cells);
    let duration = (probs.len() * patch_cells) as f64 * 0.01;
    let t = rasterize(&preds, duration, threshold).map_err(|e| e.to_string())?;
    let ivs = extract_intervals(&t[0], 0.0, 0.0);
    ensure!(intervals_to_cells(&ivs, t[0].len()) == t[0].cells, "roundtrip changed cells");
    Ok(())
}

pub fn check_cell_roundtrip(cell_probs: &[f64], threshold: f64) -> Check {
    let t = ClassTimeline::from_probs(0, cell_probs.to_vec(), threshold);
    let ivs = extract_intervals(&t, 0.0, 0.0);
    ensure!(intervals_to_cells(&ivs, t.len()) == t.cells, "roundtrip changed cells");
    Ok(())
}

pub fn check_threshold_monotone(cell_probs: &[f64], t1: f64, t2: f64) -> Check {
    let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
    let a = ClassTimeline::from_probs(0, cell_probs.to_vec(), lo);
    let b = ClassTimeline::from_probs(0, cell_probs.to_vec(), hi);
    ensure!(
        a.cells.iter().zip(&b.cells).all(|(x, y)| *x || !*y),
        "raising the threshold switched a cell on"
    );
    Ok(())
}

pub fn check_intervals_well_formed(cell_probs: &[f64], threshold: f64, min_d: f64, gap: f64) -> Check {
    let t = ClassTimeline::from_probs(0, cell_probs.to_vec(), threshold);
    let duration = t.len() as f64 * 0.01;
    let ivs = extract_intervals(&t, min_d, gap);
    let mut prev = 0.0;
    for iv in &ivs {
        ensure!(iv.start_s() >= prev - 1e-12, "intervals overlap or are unsorted");
        ensure!(iv.start_s() < iv.end_s() && iv.end_s() <= duration + 1e-9, "interval outside [0, duration]");
        ensure!(iv.duration_s() >= min_d - 1e-9, "short interval kept");
        ensure!((0.0..=1.0).contains(&iv.confidence), "confidence out of range");
        prev = iv.end_s();
    }
    for w in ivs.windows(2) {
        ensure!(w[1].start_s() - w[0].end_s() >= gap - 1e-9, "mergeable gap left open");
    }
    Ok(())
}

// ---------------------------------------------------------------- dataset

pub fn check_split_laws(n: usize, fraction: f64, seed: u64) -> Check {
    let items: Vec<usize> = (0..n).collect();
    let (a, b) = split(&items, fraction, seed).map_err(|e| e.to_string())?;
    let (a2, b2) = split(&items, fraction, seed).map_err(|e| e.to_string())?;
    ensure!(a == a2 && b == b2, "split not deterministic");
    ensure!(a.len() == train_size(n, fraction), "train size {} for N={n}, f={fraction}", a.len());
    ensure!(a.len() == (fraction * n as f64 + 0.5).floor() as usize, "size formula");
    let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
    all.sort_unstable();
    ensure!(all == items, "split is not a partition");
    Ok(())
}

pub fn check_augment_identities(samples: &[f64], shift_s: f64, gain_db: f64, seed: u64) -> Check {
    let clip = AudioClip::new("a", samples.to_vec(), 16_000);
    let run = |r: &[AugmentStep]| augment(&clip, r, seed).map_err(|e| e.to_string());
    let same = run(&[AugmentStep::Gain { db: 0.0 }])?;
    ensure!(same.samples == clip.samples, "0 dB gain changed samples");
    let there_and_back = run(&[
        AugmentStep::TimeShift { seconds: shift_s },
        AugmentStep::TimeShift { seconds: -shift_s },
    ])?;
    ensure!(there_and_back.samples == clip.samples, "shift then unshift changed samples");
    let g = run(&[AugmentStep::Gain { db: gain_db }])?;
    ensure!(g.samples.len() == clip.samples.len() && g.sample_rate_hz == clip.sample_rate_hz, "duration changed");
    let factor = 10f64.powf(gain_db / 20.0);
    ensure!(
        (g.rms() - factor * clip.rms()).abs() <= 1e-12 * factor.max(1.0) * clip.rms().max(1e-300),
        "gain scaled rms by {} instead of {factor}",
        g.rms() / clip.rms()
    );
    let noisy = run(&[AugmentStep::AddNoise { snr_db: 20.0 }, AugmentStep::TimeShift { seconds: shift_s }])?;
    ensure!(noisy.samples.len() == clip.samples.len(), "noise changed duration");
    Ok(())
}

// ---------------------------------------------------------------- runners

pub fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

/// Run `check` over `cases` inputs drawn from `strategy`.
pub fn run_property<S: Strategy>(
    name: &str,
    cases: u32,
    strategy: S,
    check: impl Fn(S::Value) -> Check,
) -> Check {
    runner(cases)
        .run(&strategy, |v| check(v).map_err(TestCaseError::fail))
        .map_err(|e| format!("{name}: {e}"))
}

pub fn probs_strategy(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![Just(0.0), Just(0.5), Just(1.0), 0.0f64..=1.0],
        1..max_len,
    )
}

/// Every invariant-section property, `cases` inputs each.
pub fn property_suites(cases: u32) -> Check {
    run_property(
        "timeline roundtrip (patches)",
        cases,
        (probs_strategy(30), 1usize..120, 0.01f64..0.99),
        |(p, w, t)| check_timeline_roundtrip(&p, w, t),
    )?;
    run_property(
        "timeline roundtrip (cells)",
        cases,
        (probs_strategy(600), 0.01f64..0.99),
        |(p, t)| check_cell_roundtrip(&p, t),
    )?;
    run_property(
        "threshold monotonicity",
        cases,
        (probs_strategy(600), 0.01f64..0.99, 0.01f64..0.99),
        |(p, a, b)| check_threshold_monotone(&p, a, b),
    )?;
    run_property(
        "intervals disjoint and in range",
        cases,
        (probs_strategy(600), 0.01f64..0.99, 0.0f64..0.5, 0.0f64..0.5),
        |(p, t, m, g)| check_intervals_well_formed(&p, t, m, g),
    )?;
    run_property(
        "auc score-order invariance",
        cases,
        (
            prop::collection::vec((0u32..50, any::<bool>()), 2..300),
            any::<u64>(),
        ),
        |(v, seed)| {
            let scores: Vec<f64> = v.iter().map(|(s, _)| *s as f64 / 50.0).collect();
            let truth: Vec<bool> = v.iter().map(|(_, t)| *t).collect();
            check_auc_invariances(&scores, &truth, seed)
        },
    )?;
    run_property(
        "auc against pairwise oracle",
        cases,
        prop::collection::vec((-1.0f64..1.0, any::<bool>()), 1..300),
        |v| {
            let scores: Vec<f64> = v.iter().map(|(s, _)| *s).collect();
            let truth: Vec<bool> = v.iter().map(|(_, t)| *t).collect();
            check_auc(&scores, &truth)
        },
    )?;
    run_property(
        "split partition laws",
        cases,
        (1usize..500, 0.01f64..0.99, any::<u64>()),
        |(n, f, s)| check_split_laws(n, f, s),
    )?;
    run_property(
        "augmentation identities",
        cases,
        (
            prop::collection::vec(-1.0f64..1.0, 1..4000),
            -0.2f64..0.2,
            -20.0f64..20.0,
            any::<u64>(),
        ),
        |(s, shift, g, seed)| check_augment_identities(&s, shift, g, seed),
    )?;
    run_property(
        "framing count",
        cases,
        (0usize..20_000, 1usize..1000, 1usize..500),
        |(n, w, h)| check_framing(n, w, h),
    )?;
    run_property(
        "patch cut/concatenate",
        cases,
        (
            prop::collection::vec(prop::collection::vec(-20.0f64..5.0, 4), 1..300),
            1usize..100,
        ),
        |(rows, p)| check_patch_roundtrip(&rows, p),
    )?;
    Ok(())
}

// ---------------------------------------------------------------- cli

pub fn air_bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_air"))
}

/// Run the binary in `dir` with `args`.
pub fn air(dir: &Path, args: &[&str]) -> Output {
    Command::new(air_bin())
        .current_dir(dir)
        .args(args)
        .env_remove("AIR_LOG")
        .output()
        .expect("spawn air")
}

pub fn ok(out: &Output) -> Check {
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "exit {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

pub fn write_file(path: &Path, text: &str) {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).unwrap();
    }
    std::fs::write(path, text).unwrap();
}
