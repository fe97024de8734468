//! Seeded train/eval split, label-preserving waveform augmentation and
//! class balancing by augmented copies.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::manifest::ManifestEntry;
use crate::audio_io::AudioClip;
use crate::error::{Error, Result};
use crate::util::derive_seed;

/// Partition `items` into (train, eval) with `round(train_fraction * N)`
/// training items, rounding halves up. Both sides keep input order.
pub fn split<T: Clone>(items: &[T], train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(Error::EmptyInput("nothing to split".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let n_train = train_size(items.len(), train_fraction);
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &["split"])));
    let mut in_train = vec![false; items.len()];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let (mut train, mut eval) = (Vec::with_capacity(n_train), Vec::new());
    for (item, t) in items.iter().zip(in_train) {
        if t {
            train.push(item.clone());
        } else {
            eval.push(item.clone());
        }
    }
    Ok((train, eval))
}

pub fn train_size(n: usize, train_fraction: f64) -> usize {
    ((train_fraction * n as f64 + 0.5).floor() as usize).min(n)
}

/// One augmentation step. Steps compose left to right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentStep {
    /// Circular shift; positive values delay the signal.
    TimeShift { seconds: f64 },
    Gain { db: f64 },
    /// White Gaussian noise at the given signal-to-noise ratio.
    AddNoise { snr_db: f64 },
}

impl AugmentStep {
    fn check(&self) -> Result<()> {
        let v = match *self {
            AugmentStep::TimeShift { seconds } => seconds,
            AugmentStep::Gain { db } => db,
            AugmentStep::AddNoise { snr_db } => snr_db,
        };
        if v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidRecipe(format!("{self:?} has a non-finite parameter")))
        }
    }
}

/// Apply `recipe` to `clip`. Duration and sample rate never change. Samples
/// are not re-limited to `[-1, 1]`, so `Gain` scales RMS exactly.
pub fn augment(clip: &AudioClip, recipe: &[AugmentStep], seed: u64) -> Result<AudioClip> {
    for step in recipe {
        step.check()?;
    }
    let mut samples = clip.samples.clone();
    let n = samples.len();
    for (k, step) in recipe.iter().enumerate() {
        match *step {
            AugmentStep::TimeShift { seconds } if n > 0 => {
                let shift = (seconds * clip.sample_rate_hz as f64).round() as i64;
                let shift = shift.rem_euclid(n as i64) as usize;
                samples.rotate_right(shift);
            }
            AugmentStep::TimeShift { .. } => {}
            AugmentStep::Gain { db } => {
                let g = 10f64.powf(db / 20.0);
                samples.iter_mut().for_each(|s| *s *= g);
            }
            AugmentStep::AddNoise { snr_db } => {
                if n == 0 {
                    continue;
                }
                let power = samples.iter().map(|s| s * s).sum::<f64>() / n as f64;
                if power == 0.0 {
                    continue;
                }
                let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(seed, &["noise", &k.to_string()]));
                for s in samples.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *s += sigma * z;
                }
            }
        }
    }
    Ok(AudioClip {
        samples,
        ..clip.clone()
    })
}

/// Ranges from which a random shift + gain + noise recipe is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSpec {
    pub max_shift_s: f64,
    pub gain_db: (f64, f64),
    pub snr_db: (f64, f64),
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            max_shift_s: 0.3,
            gain_db: (-6.0, 3.0),
            snr_db: (15.0, 35.0),
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        let ok_range = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !(self.max_shift_s.is_finite() && self.max_shift_s >= 0.0) {
            return Err(Error::InvalidRecipe("max_shift_s must be finite and >= 0".into()));
        }
        if !ok_range(self.gain_db) || !ok_range(self.snr_db) {
            return Err(Error::InvalidRecipe("gain/snr ranges need finite lo <= hi".into()));
        }
        Ok(())
    }

    pub fn sample(&self, seed: u64) -> Result<Vec<AugmentStep>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |lo: f64, hi: f64| if hi > lo { rng.random_range(lo..=hi) } else { lo };
        Ok(vec![
            AugmentStep::TimeShift {
                seconds: draw(-self.max_shift_s, self.max_shift_s),
            },
            AugmentStep::Gain {
                db: draw(self.gain_db.0, self.gain_db.1),
            },
            AugmentStep::AddNoise {
                snr_db: draw(self.snr_db.0, self.snr_db.1),
            },
        ])
    }

    /// Recipe for a balanced-manifest entry, derived from its clip id so the
    /// result does not depend on processing order.
    pub fn recipe_for(&self, master_seed: u64, clip_id: &str) -> Result<Vec<AugmentStep>> {
        self.sample(derive_seed(master_seed, &["augment", clip_id]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Balanced {
    pub entries: Vec<ManifestEntry>,
    pub augmentations: usize,
}

/// Add `#augK` copies until every class has about `per_class_target`
/// positives. Classes already at or above the target get no copies.
///
/// Classes are filled from the rarest up; single-label originals are
/// preferred as copy sources so that filling one class disturbs the others
/// as little as possible.
pub fn balance_classes(
    entries: &[ManifestEntry],
    n_classes: usize,
    per_class_target: usize,
    seed: u64,
) -> Result<Balanced> {
    let mut counts = vec![0usize; n_classes];
    for e in entries {
        for c in e.labels.ones() {
            counts[c] += 1;
        }
    }
    let mut order: Vec<usize> = (0..n_classes).collect();
    order.sort_by_key(|&c| (counts[c], c));

    let mut next_k: HashMap<usize, u32> = HashMap::new();
    let mut out = entries.to_vec();
    let mut augmentations = 0;
    for c in order {
        let deficit = per_class_target.saturating_sub(counts[c]);
        if deficit == 0 {
            continue;
        }
        let mut sources: Vec<usize> = (0..entries.len())
            .filter(|&i| entries[i].labels.get(c))
            .collect();
        if sources.is_empty() {
            return Err(Error::EmptyClass(format!("class #{c}")));
        }
        sources.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            seed,
            &["balance", &c.to_string()],
        )));
        sources.sort_by_key(|&i| entries[i].labels.count());
        for j in 0..deficit {
            let src = sources[j % sources.len()];
            let k = next_k.entry(src).or_insert(0);
            *k += 1;
            let mut copy = entries[src].clone();
            copy.clip_id = format!("{}#aug{}", entries[src].clip_id, k);
            for l in copy.labels.ones() {
                counts[l] += 1;
            }
            out.push(copy);
            augmentations += 1;
        }
    }
    Ok(Balanced {
        entries: out,
        augmentations,
    })
}
