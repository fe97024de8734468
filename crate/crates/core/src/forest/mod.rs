//! One-vs-rest random forest.
//!
//! Every class gets its own ensemble of binary CART trees. Trees are grown
//! on bootstrap resamples, choosing at each node the Gini-optimal split over
//! a random subset of features; leaves keep the weighted fraction of
//! positives they saw, and a class probability is the mean of the leaf
//! fractions reached. Training is deterministic for a given seed: each tree
//! draws from its own generator seeded by `(seed, class, tree)`.

mod format;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabelSet, Ontology};
use crate::embedding::{EmbeddingSource, FeatureVector};
use crate::error::{Error, Result};
use crate::util::derive_seed;

pub use format::{load, read_model, save, write_model, MODEL_MAGIC, MODEL_REVISION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` means `round(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn resolved_features_per_split(&self, d: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (d as f64).sqrt().round() as usize)
            .clamp(1, d.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_samples_leaf == 0 {
            return Err(Error::InvalidConfig(
                "n_trees and min_samples_leaf must be positive".into(),
            ));
        }
        if self.features_per_split == Some(0) || self.max_depth == Some(0) {
            return Err(Error::InvalidConfig(
                "features_per_split and max_depth must be positive when set".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        positive_fraction: f64,
    },
}

/// Flat pre-order node array; children always sit after their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf(positive_fraction: f64) -> Self {
        DecisionTree {
            nodes: vec![Node::Leaf { positive_fraction }],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { positive_fraction } => return positive_fraction,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + go(t, left as usize).max(go(t, right as usize))
                }
            }
        }
        go(self, 0)
    }

    /// Structural checks used when loading untrusted model files.
    pub(crate) fn check(&self, dimension: usize) -> std::result::Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree without nodes".into());
        }
        let n = self.nodes.len();
        let mut referenced = vec![false; n];
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Leaf { positive_fraction } => {
                    if !(0.0..=1.0).contains(&positive_fraction) {
                        return Err(format!("leaf fraction {positive_fraction} outside [0, 1]"));
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let (l, r) = (left as usize, right as usize);
                    if feature as usize >= dimension || !threshold.is_finite() {
                        return Err(format!("node {i}: bad feature {feature} / threshold"));
                    }
                    if l <= i || r <= i || l >= n || r >= n || l == r {
                        return Err(format!("node {i}: bad children {l}, {r}"));
                    }
                    for c in [l, r] {
                        if referenced[c] {
                            return Err(format!("node {c} has two parents"));
                        }
                        referenced[c] = true;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Weighted Gini impurity `2 p (1 - p)` of a node with `positives` of `n`.
pub fn gini(positives: f64, n: f64) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    let p = positives / n;
    2.0 * p * (1.0 - p)
}

/// `n * gini`, written so that swapping positives and negatives gives the
/// bit-identical value.
fn weighted_gini(pos: u64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        2.0 * (pos * (n - pos)) as f64 / n as f64
    }
}

/// Class probabilities for one patch. Not normalised across classes.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPrediction {
    pub probabilities: Vec<f64>,
    pub clip_id: String,
    pub patch_index: usize,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub ontology: Ontology,
    pub embedding: EmbeddingSource,
    pub frontend_hash: u64,
    pub seed: u64,
    pub params: ForestParams,
    /// Free-form provenance (resolved run configuration, tool version).
    pub provenance: String,
    /// `ensembles[class][tree]`
    pub ensembles: Vec<Vec<DecisionTree>>,
}

impl ForestModel {
    pub fn n_classes(&self) -> usize {
        self.ensembles.len()
    }

    pub fn dimension(&self) -> usize {
        self.embedding.dimension
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: x.len(),
            });
        }
        Ok(self
            .ensembles
            .iter()
            .map(|trees| trees.iter().map(|t| t.predict(x)).sum::<f64>() / trees.len() as f64)
            .map(|p| p.clamp(0.0, 1.0))
            .collect())
    }

    pub fn predict_patch(&self, feature: &FeatureVector) -> Result<PatchPrediction> {
        Ok(PatchPrediction {
            probabilities: self.predict(&feature.values)?,
            clip_id: feature.clip_id.clone(),
            patch_index: feature.patch_index,
            start_s: feature.start_s,
            end_s: feature.end_s,
        })
    }
}

/// Everything a trained model carries besides its trees.
#[derive(Debug, Clone)]
pub struct ModelMeta {
    pub ontology: Ontology,
    pub embedding: EmbeddingSource,
    pub frontend_hash: u64,
    pub provenance: String,
}

pub fn train(
    features: &[FeatureVector],
    labels: &[LabelSet],
    meta: ModelMeta,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    let rows: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
    train_rows(&rows, labels, meta, params, seed)
}

pub fn train_rows(
    rows: &[&[f64]],
    labels: &[LabelSet],
    meta: ModelMeta,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    params.validate()?;
    if rows.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: labels.len(),
        });
    }
    if rows.len() < 2 {
        return Err(Error::EmptyInput("need at least two training samples".into()));
    }
    let d = meta.embedding.dimension;
    for r in rows {
        if r.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: r.len(),
            });
        }
    }
    if let Some(v) = rows.iter().flat_map(|r| r.iter()).find(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(format!("non-finite feature value {v}")));
    }
    let n_classes = meta.ontology.len();
    if labels.iter().any(|l| l.len() != n_classes) {
        return Err(Error::InvalidConfig("label width differs from ontology size".into()));
    }
    let targets: Vec<Vec<bool>> = (0..n_classes)
        .map(|c| labels.iter().map(|l| l.get(c)).collect())
        .collect();
    for (c, y) in targets.iter().enumerate() {
        let pos = y.iter().filter(|&&b| b).count();
        if pos == 0 || pos == y.len() {
            return Err(Error::DegenerateClass(meta.ontology.name(c).to_string()));
        }
    }

    // column-major copy for cache-friendly per-feature scans
    let columns: Vec<Vec<f64>> = (0..d).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let grower = Grower {
        columns: &columns,
        n_features: d,
        max_features: params.resolved_features_per_split(d),
        max_depth: params.max_depth.unwrap_or(usize::MAX),
        min_leaf: params.min_samples_leaf as u64,
    };
    let jobs: Vec<(usize, usize)> = (0..n_classes)
        .flat_map(|c| (0..params.n_trees).map(move |t| (c, t)))
        .collect();
    let trees: Vec<DecisionTree> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let tree_seed = derive_seed(seed, &["tree", &c.to_string(), &t.to_string()]);
            grower.grow(&targets[c], params.bootstrap, tree_seed)
        })
        .collect();
    let mut it = trees.into_iter();
    let ensembles = (0..n_classes)
        .map(|_| it.by_ref().take(params.n_trees).collect())
        .collect();

    let mut params = params.clone();
    params.features_per_split = Some(grower.max_features);
    Ok(ForestModel {
        ontology: meta.ontology,
        embedding: meta.embedding,
        frontend_hash: meta.frontend_hash,
        seed,
        params,
        provenance: meta.provenance,
        ensembles,
    })
}

struct Grower<'a> {
    columns: &'a [Vec<f64>],
    n_features: usize,
    max_features: usize,
    max_depth: usize,
    min_leaf: u64,
}

#[derive(Clone, Copy)]
struct Sample {
    idx: u32,
    weight: u32,
    positive: bool,
}

struct Candidate {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    fn grow(&self, y: &[bool], bootstrap: bool, seed: u64) -> DecisionTree {
        let n = y.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = vec![0u32; n];
        if bootstrap {
            for _ in 0..n {
                weights[rng.random_range(0..n)] += 1;
            }
        } else {
            weights.fill(1);
        }
        let mut samples: Vec<Sample> = (0..n)
            .filter(|&i| weights[i] > 0)
            .map(|i| Sample {
                idx: i as u32,
                weight: weights[i],
                positive: y[i],
            })
            .collect();

        let mut nodes = vec![Node::Leaf {
            positive_fraction: 0.0,
        }];
        // (node slot, sample range, depth)
        let mut stack = vec![(0usize, 0usize, samples.len(), 0usize)];
        let mut scratch: Vec<(f64, Sample)> = Vec::with_capacity(samples.len());
        while let Some((slot, lo, hi, depth)) = stack.pop() {
            let part = &mut samples[lo..hi];
            let (w, p) = totals(part);
            let fraction = p as f64 / w as f64;
            let splittable = p > 0 && p < w && depth < self.max_depth && w >= 2 * self.min_leaf;
            let best = if splittable {
                self.best_split(part, w, p, &mut rng, &mut scratch)
            } else {
                None
            };
            let Some(best) = best else {
                nodes[slot] = Node::Leaf {
                    positive_fraction: fraction,
                };
                continue;
            };
            let col = &self.columns[best.feature];
            let mid = partition(part, |s| col[s.idx as usize] <= best.threshold);
            let (left, right) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf {
                positive_fraction: 0.0,
            });
            nodes.push(Node::Leaf {
                positive_fraction: 0.0,
            });
            nodes[slot] = Node::Split {
                feature: best.feature as u32,
                threshold: best.threshold,
                left: left as u32,
                right: right as u32,
            };
            stack.push((right, lo + mid, hi, depth + 1));
            stack.push((left, lo, lo + mid, depth + 1));
        }
        DecisionTree { nodes }
    }

    /// Lowest weighted child impurity over a random feature subset; if the
    /// subset holds no usable split the remaining features are tried too.
    /// Ties keep the lower feature index, then the lower threshold.
    fn best_split(
        &self,
        part: &[Sample],
        w: u64,
        p: u64,
        rng: &mut ChaCha8Rng,
        scratch: &mut Vec<(f64, Sample)>,
    ) -> Option<Candidate> {
        let mut chosen = sample(rng, self.n_features, self.max_features).into_vec();
        chosen.sort_unstable();
        let mut best = self.scan_features(&chosen, part, w, p, scratch);
        if best.is_none() && self.max_features < self.n_features {
            let mut in_subset = vec![false; self.n_features];
            chosen.iter().for_each(|&f| in_subset[f] = true);
            let rest: Vec<usize> = (0..self.n_features).filter(|&f| !in_subset[f]).collect();
            best = self.scan_features(&rest, part, w, p, scratch);
        }
        best
    }

    fn scan_features(
        &self,
        features: &[usize],
        part: &[Sample],
        w: u64,
        p: u64,
        scratch: &mut Vec<(f64, Sample)>,
    ) -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        for &f in features {
            let col = &self.columns[f];
            scratch.clear();
            scratch.extend(part.iter().map(|s| (col[s.idx as usize], *s)));
            scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if scratch[0].0 == scratch[scratch.len() - 1].0 {
                continue;
            }
            let (mut wl, mut pl) = (0u64, 0u64);
            for k in 0..scratch.len() - 1 {
                let s = scratch[k].1;
                wl += s.weight as u64;
                pl += s.positive as u64 * s.weight as u64;
                let (v, next) = (scratch[k].0, scratch[k + 1].0);
                if v == next || wl < self.min_leaf || w - wl < self.min_leaf {
                    continue;
                }
                let score = weighted_gini(pl, wl) + weighted_gini(p - pl, w - wl);
                if best.as_ref().is_none_or(|b| score < b.score) {
                    best = Some(Candidate {
                        score,
                        feature: f,
                        threshold: midpoint(v, next),
                    });
                }
            }
        }
        best
    }
}

fn totals(part: &[Sample]) -> (u64, u64) {
    part.iter().fold((0, 0), |(w, p), s| {
        (w + s.weight as u64, p + s.positive as u64 * s.weight as u64)
    })
}

/// Midpoint of two consecutive distinct values that still separates them.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b || m < a {
        a
    } else {
        m
    }
}

/// Stable in-place partition; returns the number of elements satisfying
/// `pred`, which end up first.
fn partition(part: &mut [Sample], pred: impl Fn(&Sample) -> bool) -> usize {
    let (yes, no): (Vec<Sample>, Vec<Sample>) = part.iter().partition(|s| pred(s));
    let k = yes.len();
    part[..k].copy_from_slice(&yes);
    part[k..].copy_from_slice(&no);
    k
}
