//! WAV decoding, channel mixdown and sample-rate conversion.
//!
//! Everything downstream works on a single canonical representation: a mono
//! [`AudioClip`] at [`CANONICAL_RATE_HZ`] with samples in `[-1, 1]`.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

pub const CANONICAL_RATE_HZ: u32 = 16_000;

/// Decoded mono waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub clip_id: String,
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
    pub source_path: String,
}

impl AudioClip {
    pub fn new(clip_id: impl Into<String>, samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        AudioClip {
            clip_id: clip_id.into(),
            samples,
            sample_rate_hz,
            source_path: String::new(),
        }
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    /// Samples in `[start_s, end_s)`.
    pub fn trim(&self, start_s: f64, end_s: f64) -> Result<AudioClip> {
        let duration_s = self.duration_seconds();
        let out_of_range = Error::OutOfRange {
            start_s,
            end_s,
            duration_s,
        };
        if !(start_s.is_finite() && end_s.is_finite()) || start_s < 0.0 || start_s >= end_s {
            return Err(out_of_range);
        }
        // half a sample of slack so that trim(0, duration) always succeeds
        let slack = 0.5 / self.sample_rate_hz as f64;
        if end_s > duration_s + slack {
            return Err(out_of_range);
        }
        let rate = self.sample_rate_hz as f64;
        let first = (start_s * rate).round() as usize;
        let last = ((end_s * rate).round() as usize).min(self.samples.len());
        if first >= last {
            return Err(out_of_range);
        }
        Ok(AudioClip {
            clip_id: self.clip_id.clone(),
            samples: self.samples[first..last].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
            source_path: self.source_path.clone(),
        })
    }
}

/// Decode a RIFF/WAV file, mix to mono and resample to `target_rate_hz`.
///
/// Accepted encodings are PCM16, PCM24 and 32-bit float with one or two
/// channels.
pub fn load_wav(path: &Path, target_rate_hz: u32) -> Result<AudioClip> {
    let corrupt = |reason: String| Error::CorruptFile {
        path: path.to_path_buf(),
        reason,
    };
    // Once the file is open, any short read means the header promised more
    // data than the file holds.
    let map_err = |e: hound::Error| match e {
        hound::Error::IoError(io)
            if matches!(
                io.kind(),
                std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied
            ) =>
        {
            Error::io(path, io)
        }
        hound::Error::IoError(io) => corrupt(io.to_string()),
        hound::Error::Unsupported => Error::UnsupportedFormat(format!("{}", path.display())),
        other => corrupt(other.to_string()),
    };

    let mut reader = hound::WavReader::open(path).map_err(map_err)?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(Error::UnsupportedFormat(format!(
            "{} channels (mono or stereo only)",
            spec.channels
        )));
    }
    if spec.sample_rate == 0 {
        return Err(corrupt("zero sample rate".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_err)?,
        (hound::SampleFormat::Int, 24) => reader
            .samples::<i32>()
            .map(|s| s.map(|v| v as f64 / 8_388_608.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_err)?,
        (hound::SampleFormat::Float, 32) => {
            let raw: Vec<f32> = reader
                .samples::<f32>()
                .collect::<std::result::Result<_, _>>()
                .map_err(map_err)?;
            if raw.iter().any(|v| !v.is_finite()) {
                return Err(corrupt("non-finite float sample".into()));
            }
            raw.into_iter().map(|v| (v as f64).clamp(-1.0, 1.0)).collect()
        }
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "{bits}-bit {fmt:?} samples"
            )))
        }
    };

    let channels = spec.channels as usize;
    if !interleaved.len().is_multiple_of(channels) {
        return Err(corrupt("sample count not a multiple of channel count".into()));
    }
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    if mono.is_empty() {
        return Err(Error::EmptyAudio(path.display().to_string()));
    }

    let samples = if spec.sample_rate == target_rate_hz {
        mono
    } else {
        Resampler::new(spec.sample_rate, target_rate_hz)?.process(&mono)
    };
    let clip_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(AudioClip {
        clip_id,
        samples,
        sample_rate_hz: target_rate_hz,
        source_path: path.display().to_string(),
    })
}

/// Write a clip as mono PCM16. Samples outside `[-1, 1]` are clipped.
pub fn write_wav(clip: &AudioClip, path: &Path) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_io)?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(to_io)?;
    }
    writer.finalize().map_err(to_io)
}

/// Kaiser-windowed sinc resampler evaluated in polyphase form.
///
/// The rate ratio is reduced to `up / down`; output sample `n` sits at input
/// position `n * down / up`, whose fractional part selects one of `up`
/// filter phases.
#[derive(Debug, Clone)]
pub struct Resampler {
    up: u64,
    down: u64,
    taps: usize,
    beta: f64,
    table: Option<Vec<Vec<f64>>>,
}

const MAX_CACHED_PHASES: u64 = 4096;

impl Resampler {
    pub const DEFAULT_TAPS: usize = 64;
    pub const DEFAULT_BETA: f64 = 8.6;

    pub fn new(in_rate_hz: u32, out_rate_hz: u32) -> Result<Self> {
        Self::with_kernel(in_rate_hz, out_rate_hz, Self::DEFAULT_TAPS, Self::DEFAULT_BETA)
    }

    pub fn with_kernel(in_rate_hz: u32, out_rate_hz: u32, taps: usize, beta: f64) -> Result<Self> {
        if in_rate_hz == 0 || out_rate_hz == 0 {
            return Err(Error::InvalidConfig("sample rates must be positive".into()));
        }
        if taps < 2 || !taps.is_multiple_of(2) || beta.is_nan() || beta < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "resampler needs an even tap count >= 2 and beta >= 0 (got {taps}, {beta})"
            )));
        }
        let g = gcd(in_rate_hz as u64, out_rate_hz as u64);
        let mut r = Resampler {
            up: out_rate_hz as u64 / g,
            down: in_rate_hz as u64 / g,
            taps,
            beta,
            table: None,
        };
        if r.up <= MAX_CACHED_PHASES {
            r.table = Some((0..r.up).map(|p| r.phase_weights(p)).collect());
        }
        Ok(r)
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        ((input_len as u128 * self.up as u128 + self.down as u128 / 2) / self.down as u128) as usize
    }

    fn phase_weights(&self, phase: u64) -> Vec<f64> {
        let half = (self.taps / 2) as f64;
        let cutoff = (self.up as f64 / self.down as f64).min(1.0);
        let frac = phase as f64 / self.up as f64;
        let i0_beta = bessel_i0(self.beta);
        let lo = -(self.taps as i64 / 2 - 1);
        let mut w: Vec<f64> = (0..self.taps as i64)
            .map(|k| {
                let x = (lo + k) as f64 - frac;
                let u = x / half;
                let window = if u.abs() <= 1.0 {
                    bessel_i0(self.beta * (1.0 - u * u).sqrt()) / i0_beta
                } else {
                    0.0
                };
                cutoff * sinc(cutoff * x) * window
            })
            .collect();
        let sum: f64 = w.iter().sum();
        if sum.abs() > 1e-12 {
            w.iter_mut().for_each(|v| *v /= sum);
        }
        w
    }

    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        let n_out = self.output_len(input.len());
        let lo = -(self.taps as i64 / 2 - 1);
        let mut scratch = Vec::new();
        (0..n_out as u64)
            .map(|n| {
                let pos = n * self.down;
                let base = (pos / self.up) as i64;
                let phase = pos % self.up;
                let weights: &[f64] = match &self.table {
                    Some(t) => &t[phase as usize],
                    None => {
                        scratch = self.phase_weights(phase);
                        &scratch
                    }
                };
                let mut acc = 0.0;
                for (k, w) in weights.iter().enumerate() {
                    let idx = base + lo + k as i64;
                    if idx >= 0 && (idx as usize) < input.len() {
                        acc += w * input[idx as usize];
                    }
                }
                acc.clamp(-1.0, 1.0)
            })
            .collect()
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}
