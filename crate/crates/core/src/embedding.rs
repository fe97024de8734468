//! Per-patch feature vectors.
//!
//! Features either come from built-in summary statistics of a patch or from
//! an external `AIREMB1` file produced by some other model. The file format
//! is a header line `AIREMB1 <d>`, optional `#` comment lines, then one CSV
//! row per patch: `clip_id,patch_index,start_s,end_s,v1,...,vd`.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::Patch;
use crate::error::{Error, Result};
use crate::util::fmt_sig;

pub const EMBEDDING_MAGIC: &str = "AIREMB1";
const GRID_TOLERANCE_S: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub clip_id: String,
    pub patch_index: usize,
    pub start_s: f64,
    pub end_s: f64,
}

impl FeatureVector {
    pub fn meta(&self) -> PatchMeta {
        PatchMeta {
            clip_id: self.clip_id.clone(),
            patch_index: self.patch_index,
            start_s: self.start_s,
            end_s: self.end_s,
        }
    }
}

/// Where one patch sits in its clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchMeta {
    pub clip_id: String,
    pub patch_index: usize,
    pub start_s: f64,
    pub end_s: f64,
}

impl From<&Patch> for PatchMeta {
    fn from(p: &Patch) -> Self {
        PatchMeta {
            clip_id: p.clip_id.clone(),
            patch_index: p.index,
            start_s: p.start_s,
            end_s: p.end_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    /// Per-band mean, std, min and max.
    BuiltinStats,
    /// The raw patch, flattened frame-major.
    BuiltinFlat,
    ExternalFile,
}

impl EmbeddingKind {
    pub fn code(self) -> u8 {
        match self {
            EmbeddingKind::BuiltinStats => 0,
            EmbeddingKind::BuiltinFlat => 1,
            EmbeddingKind::ExternalFile => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(EmbeddingKind::BuiltinStats),
            1 => Some(EmbeddingKind::BuiltinFlat),
            2 => Some(EmbeddingKind::ExternalFile),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSource {
    pub kind: EmbeddingKind,
    pub dimension: usize,
    pub descriptor: String,
}

impl EmbeddingSource {
    pub fn builtin_stats(n_mels: usize) -> Self {
        EmbeddingSource {
            kind: EmbeddingKind::BuiltinStats,
            dimension: 4 * n_mels,
            descriptor: "builtin:stats(mean,std,min,max)".into(),
        }
    }

    pub fn builtin_flat(n_mels: usize, patch_frames: usize) -> Self {
        EmbeddingSource {
            kind: EmbeddingKind::BuiltinFlat,
            dimension: n_mels * patch_frames,
            descriptor: "builtin:flat".into(),
        }
    }

    pub fn featurize(&self, patch: &Patch) -> Result<FeatureVector> {
        let v = match self.kind {
            EmbeddingKind::BuiltinStats => stats_features(patch),
            EmbeddingKind::BuiltinFlat => flat_features(patch),
            EmbeddingKind::ExternalFile => {
                return Err(Error::InvalidConfig(
                    "external embeddings must be supplied as an AIREMB1 file".into(),
                ))
            }
        };
        if v.values.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: v.values.len(),
            });
        }
        Ok(v)
    }
}

/// Per-band mean, population standard deviation, min and max over the
/// patch's real frames, laid out as four blocks of `n_mels` values.
pub fn stats_features(patch: &Patch) -> FeatureVector {
    let m = patch.n_mels;
    let mut mean = vec![0.0; m];
    let mut m2 = vec![0.0; m];
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for t in 0..patch.valid_frames {
        let k = (t + 1) as f64;
        for (b, &x) in patch.frame(t).iter().enumerate() {
            let delta = x - mean[b];
            mean[b] += delta / k;
            m2[b] += delta * (x - mean[b]);
            lo[b] = lo[b].min(x);
            hi[b] = hi[b].max(x);
        }
    }
    let n = patch.valid_frames.max(1) as f64;
    let std = m2.iter().map(|v| (v / n).max(0.0).sqrt());
    let mut values = Vec::with_capacity(4 * m);
    values.extend_from_slice(&mean);
    values.extend(std);
    values.extend_from_slice(&lo);
    values.extend_from_slice(&hi);
    FeatureVector {
        values,
        clip_id: patch.clip_id.clone(),
        patch_index: patch.index,
        start_s: patch.start_s,
        end_s: patch.end_s,
    }
}

pub fn flat_features(patch: &Patch) -> FeatureVector {
    FeatureVector {
        values: patch.values.clone(),
        clip_id: patch.clip_id.clone(),
        patch_index: patch.index,
        start_s: patch.start_s,
        end_s: patch.end_s,
    }
}

pub fn write_embeddings<W: Write>(
    out: W,
    dimension: usize,
    vectors: &[FeatureVector],
    comments: &[String],
) -> Result<()> {
    let mut out = std::io::BufWriter::new(out);
    let io = |e: std::io::Error| Error::io("<embeddings>", e);
    writeln!(out, "{EMBEDDING_MAGIC} {dimension}").map_err(io)?;
    for c in comments {
        for line in c.lines() {
            writeln!(out, "# {line}").map_err(io)?;
        }
    }
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let csv_err = |e: csv::Error| Error::io("<embeddings>", std::io::Error::other(e.to_string()));
    let mut row = Vec::with_capacity(dimension + 4);
    for v in vectors {
        if v.values.len() != dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                found: v.values.len(),
            });
        }
        row.clear();
        row.push(v.clip_id.clone());
        row.push(v.patch_index.to_string());
        row.push(v.start_s.to_string());
        row.push(v.end_s.to_string());
        row.extend(v.values.iter().map(|&x| fmt_sig(x, 9)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io)
}

pub fn save_embeddings(
    path: &Path,
    dimension: usize,
    vectors: &[FeatureVector],
    comments: &[String],
) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_embeddings(f, dimension, vectors, comments)
}

/// Parse an `AIREMB1` stream. Rows of one clip must appear with increasing
/// patch index and start time.
pub fn read_embeddings<R: BufRead>(mut input: R) -> Result<(usize, Vec<FeatureVector>)> {
    let mut header = String::new();
    input
        .read_line(&mut header)
        .map_err(|e| Error::MalformedFile(e.to_string()))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(EMBEDDING_MAGIC) {
        return Err(Error::MalformedFile(format!(
            "missing `{EMBEDDING_MAGIC} <d>` header"
        )));
    }
    let dimension: usize = parts
        .next()
        .and_then(|d| d.parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::MalformedFile("header dimension must be a positive integer".into()))?;

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut vectors: Vec<FeatureVector> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::MalformedFile(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize + 1);
        if rec.len() != dimension + 4 {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                found: rec.len().saturating_sub(4),
            });
        }
        let bad = |what: &str| Error::MalformedFile(format!("line {line}: bad {what}"));
        let num = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(what))
        };
        let values = (4..rec.len())
            .map(|i| num(&rec[i], "value"))
            .collect::<Result<Vec<_>>>()?;
        vectors.push(FeatureVector {
            values,
            clip_id: rec[0].to_string(),
            patch_index: rec[1].trim().parse().map_err(|_| bad("patch_index"))?,
            start_s: num(&rec[2], "start_s")?,
            end_s: num(&rec[3], "end_s")?,
        });
    }
    for pair in vectors.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.clip_id == b.clip_id && (b.patch_index <= a.patch_index || b.start_s < a.start_s) {
            return Err(Error::GridMismatch(format!(
                "clip {:?}: patch {} at {} s follows patch {} at {} s",
                b.clip_id, b.patch_index, b.start_s, a.patch_index, a.start_s
            )));
        }
    }
    Ok((dimension, vectors))
}

pub fn read_embeddings_file(path: &Path) -> Result<(usize, Vec<FeatureVector>)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(std::io::BufReader::new(f))
}

/// Load external embeddings and check that they line up with the patch grid
/// this pipeline would have produced.
pub fn load_external_embeddings(
    path: &Path,
    expected_grid: &[PatchMeta],
) -> Result<(usize, Vec<FeatureVector>)> {
    let (d, vectors) = read_embeddings_file(path)?;
    check_grid(&vectors, expected_grid)?;
    Ok((d, vectors))
}

pub fn check_grid(vectors: &[FeatureVector], expected: &[PatchMeta]) -> Result<()> {
    if vectors.len() != expected.len() {
        return Err(Error::GridMismatch(format!(
            "{} embedding rows for {} patches",
            vectors.len(),
            expected.len()
        )));
    }
    for (v, m) in vectors.iter().zip(expected) {
        let off = (v.start_s - m.start_s).abs().max((v.end_s - m.end_s).abs());
        if v.clip_id != m.clip_id || v.patch_index != m.patch_index || off > GRID_TOLERANCE_S {
            return Err(Error::GridMismatch(format!(
                "row {}#{} [{}, {}) does not match patch {}#{} [{}, {})",
                v.clip_id, v.patch_index, v.start_s, v.end_s, m.clip_id, m.patch_index, m.start_s, m.end_s
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn patch(frames: Vec<Vec<f64>>, patch_frames: usize) -> Patch {
        let n_mels = frames[0].len();
        let valid = frames.len();
        let mut values: Vec<f64> = frames.into_iter().flatten().collect();
        values.resize(patch_frames * n_mels, 0.0);
        Patch {
            values,
            patch_frames,
            n_mels,
            valid_frames: valid,
            index: 0,
            start_s: 0.0,
            end_s: patch_frames as f64 * 0.01,
            clip_id: "p".into(),
        }
    }

    /// Two-pass per-band statistics, written independently of the
    /// streaming implementation.
    fn oracle(frames: &[Vec<f64>]) -> Vec<f64> {
        let m = frames[0].len();
        let n = frames.len() as f64;
        let col = |b: usize| frames.iter().map(move |f| f[b]);
        let means: Vec<f64> = (0..m).map(|b| col(b).sum::<f64>() / n).collect();
        let stds: Vec<f64> = (0..m)
            .map(|b| (col(b).map(|x| (x - means[b]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        let mins: Vec<f64> = (0..m).map(|b| col(b).fold(f64::INFINITY, f64::min)).collect();
        let maxs: Vec<f64> = (0..m).map(|b| col(b).fold(f64::NEG_INFINITY, f64::max)).collect();
        [means, stds, mins, maxs].concat()
    }

    #[test]
    fn constant_patch() {
        let f = stats_features(&patch(vec![vec![3.5; 64]; 96], 96));
        assert_eq!(f.values.len(), 256);
        assert!(f.values[..64].iter().all(|&v| v == 3.5));
        assert!(f.values[64..128].iter().all(|&v| v == 0.0));
        assert!(f.values[128..].iter().all(|&v| v == 3.5));
    }

    #[test]
    fn indicator_band() {
        let frames: Vec<Vec<f64>> = (0..96)
            .map(|_| (0..64).map(|b| if b == 7 { 1.0 } else { 0.0 }).collect())
            .collect();
        let f = stats_features(&patch(frames, 96));
        assert_eq!((f.values[7], f.values[64 + 7], f.values[128 + 7], f.values[192 + 7]), (1.0, 0.0, 1.0, 1.0));
        assert_eq!((f.values[8], f.values[64 + 8], f.values[128 + 8], f.values[192 + 8]), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn random_patch_matches_two_pass_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let frames: Vec<Vec<f64>> = (0..96)
            .map(|_| (0..64).map(|_| rng.random_range(-14.0..5.0)).collect())
            .collect();
        let got = stats_features(&patch(frames.clone(), 96)).values;
        for (a, b) in got.iter().zip(oracle(&frames)) {
            assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn single_frame_std_is_zero() {
        let f = stats_features(&patch(vec![vec![2.0, -1.0]], 96));
        assert_eq!(&f.values[2..4], &[0.0, 0.0]);
    }

    #[test]
    fn file_roundtrip_and_errors() {
        let vecs: Vec<FeatureVector> = (0..11)
            .map(|i| FeatureVector {
                values: (0..6).map(|j| (i * 6 + j) as f64 / 7.0).collect(),
                clip_id: "clip,a".into(),
                patch_index: i,
                start_s: i as f64 * 0.96,
                end_s: (i + 1) as f64 * 0.96,
            })
            .collect();
        let mut buf = Vec::new();
        write_embeddings(&mut buf, 6, &vecs, &["made by test".into()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("AIREMB1 6\n# made by test\n\"clip,a\",0,0,0.96,0,0.142857143,"));
        let (d, back) = read_embeddings(buf.as_slice()).unwrap();
        assert_eq!(d, 6);
        assert_eq!(back.len(), 11);
        for (a, b) in back.iter().zip(&vecs) {
            assert_eq!(a.meta(), b.meta());
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() <= 1e-8 * y.abs().max(1.0));
            }
        }
        let grid: Vec<PatchMeta> = vecs.iter().map(FeatureVector::meta).collect();
        check_grid(&back, &grid).unwrap();
        assert!(matches!(check_grid(&back[..10], &grid), Err(Error::GridMismatch(_))));

        let swapped = text.replacen("\"clip,a\",0,0,0.96", "\"clip,a\",0,5,5.96", 1);
        assert!(matches!(read_embeddings(swapped.as_bytes()), Err(Error::GridMismatch(_))));
        let ragged = format!("{text}x,99,0,1,1,2\n");
        assert!(matches!(read_embeddings(ragged.as_bytes()), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(read_embeddings("AIREMB2 3\n".as_bytes()), Err(Error::MalformedFile(_))));
        assert!(matches!(read_embeddings("AIREMB1 0\n".as_bytes()), Err(Error::MalformedFile(_))));
        let nan = "AIREMB1 1\nc,0,0,1,NaN\n";
        assert!(matches!(read_embeddings(nan.as_bytes()), Err(Error::MalformedFile(_))));
    }

    proptest! {
        #[test]
        fn stats_ignore_frame_order_and_padding(
            frames in proptest::collection::vec(proptest::collection::vec(-20.0f64..20.0, 3), 1..40),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let base = stats_features(&patch(frames.clone(), 40)).values;
            let mut shuffled = frames.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let perm = stats_features(&patch(shuffled, 40)).values;
            for (a, b) in base.iter().zip(&perm) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
            let unpadded = stats_features(&patch(frames.clone(), frames.len())).values;
            prop_assert_eq!(base, unpadded);
        }
    }
}
