//! Synthetic stand-ins for the six default classes.
//!
//! Each class has a distinct, stationary spectral signature so that any
//! 0.96 s window of a generated clip is representative of its class:
//!
//! | class            | signature                                          |
//! |------------------|----------------------------------------------------|
//! | Rapping          | 110–160 Hz harmonic stack, 4–6 Hz syllabic envelope |
//! | Cheering         | 800–4000 Hz noise with slow swell                  |
//! | Gunshot, gunfire | decaying broadband bursts every 0.18–0.3 s         |
//! | Radio            | 2.8–3.2 kHz carrier over 300–900 Hz noise          |
//! | Cat              | back-to-back rising/falling 450–840 Hz meows       |
//! | Helicopter       | 100–600 Hz noise chopped at a 12–20 Hz blade rate  |

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};

use super::manifest::ManifestEntry;
use super::ontology::LabelSet;
use crate::audio_io::{write_wav, AudioClip};
use crate::error::{Error, Result};
use crate::util::derive_seed;

pub const N_SIGNATURES: usize = 6;
const SLUGS: [&str; N_SIGNATURES] = ["rapping", "cheering", "gunshot", "radio", "cat", "helicopter"];

/// Gaussian noise restricted to `[lo_hz, hi_hz]`, unit RMS.
fn band_noise(n: usize, rate: f64, lo_hz: f64, hi_hz: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|_| Complex::new(StandardNormal.sample(rng), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * rate / n as f64;
        if f < lo_hz || f > hi_hz {
            *v = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        out.into_iter().map(|v| v / rms).collect()
    } else {
        out
    }
}

fn peak_normalize(mut s: Vec<f64>, peak: f64) -> Vec<f64> {
    let m = s.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        s.iter_mut().for_each(|v| *v *= peak / m);
    }
    s
}

/// Generate `seconds` of audio with the signature of class `class`.
pub fn synth_clip(class: usize, seconds: f64, rate: u32, seed: u64) -> Result<AudioClip> {
    if class >= N_SIGNATURES {
        return Err(Error::InvalidConfig(format!(
            "no synthetic signature for class #{class} (only {N_SIGNATURES})"
        )));
    }
    let n = (seconds * rate as f64).round() as usize;
    if n == 0 {
        return Err(Error::EmptyAudio("zero-length synthetic clip".into()));
    }
    let sr = rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = |i: usize| i as f64 / sr;
    let samples: Vec<f64> = match class {
        0 => {
            let f0 = rng.random_range(110.0..160.0);
            let syl = rng.random_range(4.0..6.0);
            let phases: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let ph0 = rng.random_range(0.0..PI);
            (0..n)
                .map(|i| {
                    let env = 0.2 + 0.8 * (PI * syl * t(i) + ph0).sin().powi(2);
                    let f = f0 * (1.0 + 0.02 * (2.0 * PI * 5.0 * t(i)).sin());
                    let v: f64 = phases
                        .iter()
                        .enumerate()
                        .map(|(k, p)| (2.0 * PI * f * (k + 1) as f64 * t(i) + p).sin() / (k + 1) as f64)
                        .sum();
                    env * v
                })
                .collect()
        }
        1 => {
            let noise = band_noise(n, sr, 800.0, 4000.0, &mut rng);
            let rate_hz = rng.random_range(0.3..0.8);
            let ph = rng.random_range(0.0..2.0 * PI);
            noise
                .into_iter()
                .enumerate()
                .map(|(i, v)| v * (0.7 + 0.3 * (2.0 * PI * rate_hz * t(i) + ph).sin()))
                .collect()
        }
        2 => {
            let noise = band_noise(n, sr, 200.0, 6000.0, &mut rng);
            let mut env = vec![0.0; n];
            let period = rng.random_range(0.18..0.3);
            let mut onset = rng.random_range(0.0..period);
            while onset < seconds {
                let tau = rng.random_range(0.02..0.04);
                let first = (onset * sr) as usize;
                for (j, e) in env[first.min(n)..].iter_mut().enumerate() {
                    let d = j as f64 / sr;
                    if d > 6.0 * tau {
                        break;
                    }
                    *e += (-d / tau).exp();
                }
                onset += period * rng.random_range(0.85..1.15);
            }
            noise.into_iter().zip(env).map(|(v, e)| v * e).collect()
        }
        3 => {
            let fc = rng.random_range(2800.0..3200.0);
            let ph = rng.random_range(0.0..2.0 * PI);
            band_noise(n, sr, 300.0, 900.0, &mut rng)
                .into_iter()
                .enumerate()
                .map(|(i, v)| 0.5 * v + 1.2 * (2.0 * PI * fc * t(i) + ph).sin())
                .collect()
        }
        4 => {
            let mut out = Vec::with_capacity(n);
            let mut phase = 0.0;
            while out.len() < n {
                let base = rng.random_range(450.0..600.0);
                let len = (rng.random_range(0.5..0.7) * sr) as usize;
                let gap = (rng.random_range(0.05..0.15) * sr) as usize;
                for j in 0..len {
                    let u = j as f64 / len as f64;
                    let f = base * (1.0 + 0.4 * (PI * u).sin());
                    phase += 2.0 * PI * f / sr;
                    let env = (PI * u).sin().powf(0.5);
                    let v: f64 = (1..=4).map(|k| (k as f64 * phase).sin() / k as f64).sum();
                    out.push(env * v);
                }
                out.extend(std::iter::repeat_n(0.0, gap));
            }
            out.truncate(n);
            out
        }
        _ => {
            let blade = rng.random_range(12.0..20.0);
            let ph = rng.random_range(0.0..2.0 * PI);
            band_noise(n, sr, 100.0, 600.0, &mut rng)
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    let chop = 0.5 + 0.5 * (2.0 * PI * blade * t(i) + ph).sin();
                    v * (0.2 + 0.8 * chop.powi(3))
                })
                .collect()
        }
    };
    let peak = rng.random_range(0.3..0.8);
    Ok(AudioClip::new(
        format!("{}_{seed:016x}", SLUGS[class]),
        peak_normalize(samples, peak),
        rate,
    ))
}

/// Digital silence or a faint white-noise floor, chosen by `seed`.
pub fn synth_background(seconds: f64, rate: u32, seed: u64) -> AudioClip {
    let n = (seconds * rate as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = if rng.random_bool(0.5) {
        vec![0.0; n]
    } else {
        let level = rng.random_range(0.001..0.01);
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (level * z).clamp(-1.0, 1.0)
            })
            .collect()
    };
    AudioClip::new(format!("background_{seed:016x}"), samples, rate)
}

#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub per_class: usize,
    pub background: usize,
    pub clip_seconds: f64,
    pub sample_rate_hz: u32,
    pub seed: u64,
}

/// Write a labelled synthetic corpus under `dir/clips/` and return its
/// manifest entries (paths relative to `dir`). Background clips carry no
/// labels.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec, n_classes: usize) -> Result<Vec<ManifestEntry>> {
    if n_classes > N_SIGNATURES {
        return Err(Error::InvalidConfig(format!(
            "synthetic corpus supports at most {N_SIGNATURES} classes"
        )));
    }
    let clips_dir = dir.join("clips");
    std::fs::create_dir_all(&clips_dir).map_err(|e| Error::io(&clips_dir, e))?;
    let mut jobs: Vec<(String, Option<usize>)> = Vec::new();
    for (c, slug) in SLUGS.iter().enumerate().take(n_classes) {
        jobs.extend((0..spec.per_class).map(|i| (format!("{slug}_{i:04}"), Some(c))));
    }
    jobs.extend((0..spec.background).map(|i| (format!("background_{i:04}"), None)));

    use rayon::prelude::*;
    jobs.par_iter()
        .map(|(id, class)| {
            let seed = derive_seed(spec.seed, &["synth", id]);
            let mut clip = match class {
                Some(c) => synth_clip(*c, spec.clip_seconds, spec.sample_rate_hz, seed)?,
                None => synth_background(spec.clip_seconds, spec.sample_rate_hz, seed),
            };
            clip.clip_id = id.clone();
            let rel = PathBuf::from("clips").join(format!("{id}.wav"));
            write_wav(&clip, &dir.join(&rel))?;
            Ok(ManifestEntry {
                clip_id: id.clone(),
                path: rel,
                start_s: 0.0,
                end_s: clip.duration_seconds(),
                labels: match class {
                    Some(c) => LabelSet::from_indices(n_classes, &[*c]),
                    None => LabelSet::empty(n_classes),
                },
            })
        })
        .collect()
}
