//! Log-mel frontend and patch cutting.
//!
//! Frames are Hann-windowed power spectra projected onto an HTK-scale
//! triangular filterbank and compressed with `ln(x + log_offset)`. With the
//! default 10 ms hop one frame equals one cell of the retrieval grid.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio_io::AudioClip;
use crate::error::{Error, Result};
use crate::util::fmt_sig;

/// Resolution of retrieval timelines in seconds.
pub const GRID_CELL_S: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontendConfig {
    pub sample_rate_hz: u32,
    pub window_length_s: f64,
    pub hop_length_s: f64,
    pub fft_size: usize,
    pub n_mels: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub log_offset: f64,
    pub patch_frames: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            sample_rate_hz: crate::audio_io::CANONICAL_RATE_HZ,
            window_length_s: 0.025,
            hop_length_s: 0.010,
            fft_size: 512,
            n_mels: 64,
            fmin_hz: 125.0,
            fmax_hz: 7500.0,
            log_offset: 1e-6,
            patch_frames: 96,
        }
    }
}

impl FrontendConfig {
    pub fn window_samples(&self) -> usize {
        (self.window_length_s * self.sample_rate_hz as f64).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_length_s * self.sample_rate_hz as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.sample_rate_hz == 0 {
            return bad("sample_rate_hz must be positive".into());
        }
        if !(self.window_length_s > 0.0 && self.hop_length_s > 0.0) {
            return bad("window and hop lengths must be positive".into());
        }
        if self.hop_length_s > self.window_length_s {
            return bad("hop_length_s exceeds window_length_s".into());
        }
        if self.hop_samples() == 0 {
            return bad("hop shorter than one sample".into());
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < self.window_samples() {
            return bad(format!(
                "fft_size {} must be a power of two >= window ({} samples)",
                self.fft_size,
                self.window_samples()
            ));
        }
        if self.n_mels == 0 || self.patch_frames == 0 {
            return bad("n_mels and patch_frames must be positive".into());
        }
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < self.fmax_hz && self.fmax_hz <= nyquist) {
            return bad(format!(
                "need 0 <= fmin < fmax <= {nyquist} Hz (got {} / {})",
                self.fmin_hz, self.fmax_hz
            ));
        }
        if !(self.log_offset > 0.0 && self.log_offset.is_finite()) {
            return bad("log_offset must be a small positive number".into());
        }
        Ok(())
    }

    /// Extra requirement for producing 0.01 s retrieval timelines: one hop
    /// must be exactly one grid cell.
    pub fn validate_for_grid(&self) -> Result<()> {
        self.validate()?;
        let hop = self.hop_samples() as f64 / self.sample_rate_hz as f64;
        if (hop - GRID_CELL_S).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "hop of {hop} s does not match the {GRID_CELL_S} s retrieval grid"
            )));
        }
        Ok(())
    }

    /// Fingerprint stored in trained models so that inference refuses a
    /// frontend that differs from the one used in training.
    pub fn fingerprint(&self) -> u64 {
        let canonical = format!(
            "sr={};win={:?};hop={:?};fft={};mels={};fmin={:?};fmax={:?};off={:?};patch={}",
            self.sample_rate_hz,
            self.window_length_s,
            self.hop_length_s,
            self.fft_size,
            self.n_mels,
            self.fmin_hz,
            self.fmax_hz,
            self.log_offset,
            self.patch_frames
        );
        let digest = Sha256::digest(canonical.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"))
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Number of full windows that fit in `n_samples`.
pub fn frame_count(n_samples: usize, window: usize, hop: usize) -> usize {
    if n_samples < window || hop == 0 {
        0
    } else {
        (n_samples - window) / hop + 1
    }
}

#[derive(Debug, Clone)]
struct Filter {
    first_bin: usize,
    weights: Vec<f64>,
}

/// Triangular filters stored sparsely as runs of non-zero weights.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    filters: Vec<Filter>,
    centers_hz: Vec<f64>,
    n_bins: usize,
}

impl MelFilterbank {
    pub fn new(cfg: &FrontendConfig) -> Self {
        let n_bins = cfg.fft_size / 2 + 1;
        let bin_hz = cfg.sample_rate_hz as f64 / cfg.fft_size as f64;
        let (mlo, mhi) = (hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz));
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let filters = (0..cfg.n_mels)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let dense: Vec<f64> = (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f <= mid {
                            (f - lo) / (mid - lo)
                        } else {
                            (hi - f) / (hi - mid)
                        };
                        w.max(0.0)
                    })
                    .collect();
                let first = dense.iter().position(|&w| w > 0.0).unwrap_or(0);
                let last = dense.iter().rposition(|&w| w > 0.0).map_or(first, |l| l + 1);
                Filter {
                    first_bin: first,
                    weights: dense[first..last.max(first)].to_vec(),
                }
            })
            .collect();
        MelFilterbank {
            filters,
            centers_hz: edges[1..=cfg.n_mels].to_vec(),
            n_bins,
        }
    }

    pub fn n_mels(&self) -> usize {
        self.filters.len()
    }

    pub fn center_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Dense weight of filter `m` at FFT bin `k`.
    pub fn weight(&self, m: usize, k: usize) -> f64 {
        let f = &self.filters[m];
        if k >= f.first_bin && k < f.first_bin + f.weights.len() {
            f.weights[k - f.first_bin]
        } else {
            0.0
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.filters) {
            *o = f
                .weights
                .iter()
                .zip(&power[f.first_bin..])
                .map(|(w, p)| w * p)
                .sum();
        }
    }
}

/// Row-major `[n_frames x n_mels]` matrix of log-mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Vec<f64>,
    pub n_frames: usize,
    pub n_mels: usize,
    pub frame_hop_s: f64,
    pub clip_id: String,
}

impl MelSpectrogram {
    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_mels..(i + 1) * self.n_mels]
    }

    pub fn from_rows(rows: &[Vec<f64>], frame_hop_s: f64, clip_id: &str) -> Self {
        let n_mels = rows.first().map_or(0, Vec::len);
        MelSpectrogram {
            values: rows.iter().flatten().copied().collect(),
            n_frames: rows.len(),
            n_mels,
            frame_hop_s,
            clip_id: clip_id.to_string(),
        }
    }
}

/// Reusable STFT + filterbank state for one frontend configuration.
pub struct MelFrontend {
    cfg: FrontendConfig,
    window: Vec<f64>,
    bank: MelFilterbank,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl MelFrontend {
    pub fn new(cfg: &FrontendConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.window_samples();
        // periodic Hann
        let window = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
            .collect();
        Ok(MelFrontend {
            cfg: cfg.clone(),
            window,
            bank: MelFilterbank::new(cfg),
            fft: FftPlanner::new().plan_fft_forward(cfg.fft_size),
        })
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    pub fn compute(&self, clip: &AudioClip) -> Result<MelSpectrogram> {
        if clip.sample_rate_hz != self.cfg.sample_rate_hz {
            return Err(Error::InvalidConfig(format!(
                "clip rate {} Hz differs from frontend rate {} Hz",
                clip.sample_rate_hz, self.cfg.sample_rate_hz
            )));
        }
        let (win, hop) = (self.cfg.window_samples(), self.cfg.hop_samples());
        if clip.samples.len() < win {
            return Err(Error::ClipTooShort {
                samples: clip.samples.len(),
                window: win,
            });
        }
        let n_frames = frame_count(clip.samples.len(), win, hop);
        let n_mels = self.cfg.n_mels;
        let n_fft = self.cfg.fft_size;
        let mut values = vec![0.0; n_frames * n_mels];
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; self.bank.n_bins()];
        for (t, row) in values.chunks_exact_mut(n_mels).enumerate() {
            let frame = &clip.samples[t * hop..t * hop + win];
            for (b, (s, w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
                *b = Complex::new(s * w, 0.0);
            }
            buf[win..].fill(Complex::new(0.0, 0.0));
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            self.bank.apply(&power, row);
            for v in row.iter_mut() {
                *v = (*v + self.cfg.log_offset).ln();
            }
        }
        Ok(MelSpectrogram {
            values,
            n_frames,
            n_mels,
            frame_hop_s: hop as f64 / self.cfg.sample_rate_hz as f64,
            clip_id: clip.clip_id.clone(),
        })
    }
}

pub fn melspectrogram(clip: &AudioClip, cfg: &FrontendConfig) -> Result<MelSpectrogram> {
    MelFrontend::new(cfg)?.compute(clip)
}

/// Fixed-size block of consecutive frames. The final block of a clip may be
/// zero-padded; `valid_frames` counts the real ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub values: Vec<f64>,
    pub patch_frames: usize,
    pub n_mels: usize,
    pub valid_frames: usize,
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub clip_id: String,
}

impl Patch {
    pub fn is_padded(&self) -> bool {
        self.valid_frames < self.patch_frames
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_mels..(i + 1) * self.n_mels]
    }
}

pub fn cut_patches(spec: &MelSpectrogram, cfg: &FrontendConfig) -> Vec<Patch> {
    let p = cfg.patch_frames;
    let n_mels = spec.n_mels;
    let count = spec.n_frames.div_ceil(p);
    (0..count)
        .map(|k| {
            let first = k * p;
            let valid = (spec.n_frames - first).min(p);
            let mut values = vec![0.0; p * n_mels];
            values[..valid * n_mels]
                .copy_from_slice(&spec.values[first * n_mels..(first + valid) * n_mels]);
            Patch {
                values,
                patch_frames: p,
                n_mels,
                valid_frames: valid,
                index: k,
                start_s: first as f64 * spec.frame_hop_s,
                end_s: (first + p) as f64 * spec.frame_hop_s,
                clip_id: spec.clip_id.clone(),
            }
        })
        .collect()
}

/// Write `<path>.csv` (frames as rows, 6 significant digits) and `<path>.pgm`
/// (binary P5, time on the x axis, lowest band at the bottom).
pub fn export_spectrogram(spec: &MelSpectrogram, path: &Path) -> Result<()> {
    let csv_path = path.with_extension("csv");
    let mut text = String::new();
    for t in 0..spec.n_frames {
        let row: Vec<String> = spec.frame(t).iter().map(|&v| fmt_sig(v, 6)).collect();
        writeln!(text, "{}", row.join(",")).expect("writing to a String");
    }
    std::fs::write(&csv_path, text).map_err(|e| Error::io(&csv_path, e))?;

    let pgm_path = path.with_extension("pgm");
    let pixels = quantize(&spec.values);
    let mut out = Vec::with_capacity(pixels.len() + 32);
    write!(out, "P5\n{} {}\n255\n", spec.n_frames, spec.n_mels).expect("writing to a Vec");
    for band in (0..spec.n_mels).rev() {
        out.extend((0..spec.n_frames).map(|t| pixels[t * spec.n_mels + band]));
    }
    std::fs::write(&pgm_path, out).map_err(|e| Error::io(&pgm_path, e))
}

/// Min-max scale to 0..=255. A constant matrix becomes uniform mid-gray.
pub(crate) fn quantize(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo || hi.is_nan() || lo.is_nan() {
        return vec![128; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - lo) / (hi - lo) * 255.0).round() as u8)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tone_clip(freq: f64, amp: f64, seconds: f64) -> AudioClip {
        let n = (seconds * 16000.0) as usize;
        let s = (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / 16000.0).sin())
            .collect();
        AudioClip::new("tone", s, 16000)
    }

    #[test]
    fn mel_anchors() {
        assert_eq!(hz_to_mel(0.0), 0.0);
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
        assert!((hz_to_mel(700.0) - 781.17).abs() < 0.01);
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn one_second_has_98_frames() {
        let spec = melspectrogram(&tone_clip(440.0, 0.5, 1.0), &FrontendConfig::default()).unwrap();
        assert_eq!(spec.n_frames, 98);
        assert_eq!(spec.n_mels, 64);
        assert!(spec.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn short_clip_rejected() {
        let clip = AudioClip::new("s", vec![0.0; 399], 16000);
        assert!(matches!(
            melspectrogram(&clip, &FrontendConfig::default()),
            Err(Error::ClipTooShort { samples: 399, window: 400 })
        ));
    }

    #[test]
    fn patch_counts() {
        let cfg = FrontendConfig::default();
        let rows = |n: usize| MelSpectrogram::from_rows(&vec![vec![1.0; 64]; n], 0.01, "x");
        let p = cut_patches(&rows(98), &cfg);
        assert_eq!(p.len(), 2);
        assert_eq!(p[1].valid_frames, 2);
        assert!(p[1].is_padded());
        assert!(p[1].values[2 * 64..].iter().all(|&v| v == 0.0));
        let p = cut_patches(&rows(96), &cfg);
        assert_eq!(p.len(), 1);
        assert!(!p[0].is_padded());
        // 10 s at 16 kHz: (160000 - 400) / 160 + 1 = 998 frames
        assert_eq!(frame_count(160_000, 400, 160), 998);
        assert_eq!(cut_patches(&rows(998), &cfg).len(), 11);
    }

    #[test]
    fn patches_are_contiguous_and_timed() {
        let cfg = FrontendConfig::default();
        let spec = MelSpectrogram::from_rows(&vec![vec![0.0; 64]; 300], 0.01, "x");
        let patches = cut_patches(&spec, &cfg);
        for (k, p) in patches.iter().enumerate() {
            assert_eq!(p.index, k);
            assert!((p.end_s - p.start_s - 0.96).abs() < 1e-9);
            if k > 0 {
                assert!((patches[k - 1].end_s - p.start_s).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn filterbank_shape() {
        let cfg = FrontendConfig::default();
        let bank = MelFilterbank::new(&cfg);
        let bin_hz = 16000.0 / 512.0;
        for k in 0..bank.n_bins() {
            let f = k as f64 * bin_hz;
            let ws: Vec<f64> = (0..bank.n_mels()).map(|m| bank.weight(m, k)).collect();
            assert!(ws.iter().all(|&w| w >= 0.0));
            if f > cfg.fmin_hz && f < cfg.fmax_hz {
                assert!(ws.iter().any(|&w| w > 0.0), "bin {k} ({f} Hz) uncovered");
            }
        }
        // unimodal: weights rise then fall
        for m in 0..bank.n_mels() {
            let ws: Vec<f64> = (0..bank.n_bins()).map(|k| bank.weight(m, k)).collect();
            let peak = ws.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert!(ws[..=peak].windows(2).all(|w| w[0] <= w[1]));
            assert!(ws[peak..].windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn constant_spectrogram_is_mid_gray() {
        assert_eq!(quantize(&[2.5; 6]), vec![128; 6]);
        assert_eq!(quantize(&[0.0, 1.0, 2.0, 3.0]), vec![0, 85, 170, 255]);
    }

    #[test]
    fn export_writes_csv_and_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let spec = MelSpectrogram::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0]], 0.01, "m");
        let base = dir.path().join("fig");
        export_spectrogram(&spec, &base).unwrap();
        let csv = std::fs::read_to_string(base.with_extension("csv")).unwrap();
        assert_eq!(csv, "0,1\n2,3\n");
        let pgm = std::fs::read(base.with_extension("pgm")).unwrap();
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        // top row is the highest band: frame0 band1 = 1, frame1 band1 = 3
        assert_eq!(&pgm[header.len()..], &[85, 255, 0, 170]);
    }

    #[test]
    fn export_to_missing_directory_fails() {
        let spec = MelSpectrogram::from_rows(&[vec![0.0]], 0.01, "m");
        let err = export_spectrogram(&spec, Path::new("/nonexistent-dir-xyz/fig")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn config_validation() {
        assert!(FrontendConfig::default().validate_for_grid().is_ok());
        let d = FrontendConfig::default;
        assert!(FrontendConfig { hop_length_s: 0.05, ..d() }.validate().is_err());
        assert!(FrontendConfig { fmax_hz: 9000.0, ..d() }.validate().is_err());
        let c = FrontendConfig { hop_length_s: 0.0125, ..d() };
        assert!(c.validate().is_ok());
        assert!(c.validate_for_grid().is_err());
        assert_ne!(c.fingerprint(), FrontendConfig::default().fingerprint());
    }

    proptest! {
        #[test]
        fn framing_formula_matches_sliding_counter(n in 0usize..5000, window in 1usize..600, hop in 1usize..300) {
            let mut brute = 0;
            let mut start = 0;
            while start + window <= n {
                brute += 1;
                start += hop;
            }
            prop_assert_eq!(frame_count(n, window, hop), brute);
        }

        #[test]
        fn patches_concatenate_to_input(n_frames in 1usize..400, patch in 1usize..120) {
            let cfg = FrontendConfig { patch_frames: patch, ..FrontendConfig::default() };
            let rows: Vec<Vec<f64>> = (0..n_frames).map(|t| (0..4).map(|m| (t * 4 + m) as f64).collect()).collect();
            let spec = MelSpectrogram::from_rows(&rows, 0.01, "p");
            let patches = cut_patches(&spec, &cfg);
            prop_assert_eq!(patches.len(), n_frames.div_ceil(patch));
            let joined: Vec<f64> = patches
                .iter()
                .flat_map(|p| p.values[..p.valid_frames * p.n_mels].to_vec())
                .collect();
            prop_assert_eq!(joined, spec.values);
        }
    }
}
