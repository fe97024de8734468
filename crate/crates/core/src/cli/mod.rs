//! Command-line surface: argument parsing, configuration layering and the
//! subcommand implementations.

pub mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::OutputFormat;
pub use config::{EmbeddingChoice, RunConfig, TOOL_VERSION};

use crate::error::{Error, Result};

pub const DEFAULT_MODEL: &str = "model.airf";

#[derive(Debug, Parser)]
#[command(name = "air", version, about = "Retrieve sound event intervals by keyword")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags layered over the config file.
#[derive(Debug, Args, Default)]
pub struct Overrides {
    /// TOML run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    #[arg(long, global = true)]
    pub train_fraction: Option<f64>,
    #[arg(long, global = true)]
    pub strict_labels: bool,
    #[arg(long, global = true)]
    pub trees: Option<usize>,
    #[arg(long, global = true)]
    pub patch_frames: Option<usize>,
    /// Externally computed AIREMB1 embeddings; selects the external embedding source
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub embedding: Option<EmbeddingChoice>,
    /// Augment the training split up to this many positives per class
    #[arg(long, global = true)]
    pub balance_target: Option<usize>,
    #[arg(long, global = true)]
    pub min_duration: Option<f64>,
    #[arg(long, global = true)]
    pub merge_gap: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute patch embeddings for every manifest entry
    Featurize {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "features.airemb")]
        out: PathBuf,
        #[arg(long, default_value = "grid.csv")]
        grid: PathBuf,
    },
    /// Split, optionally balance, train the forest and report on the holdout
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "features.airemb")]
        features: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Report path stem; `.json` and `.txt` are appended
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print the intervals matching a keyword query
    Query {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
        #[arg(required = true, num_args = 1..)]
        keyword: Vec<String>,
    },
    /// Score queried classes against a ground-truth timeline
    Eval {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Report path stem; `.json`, `.txt` and `.intervals.csv` are appended
        #[arg(long, default_value = "eval_report")]
        report: PathBuf,
        #[arg(required = true, num_args = 1..)]
        keywords: Vec<String>,
    },
    /// Concatenate labelled segments with silent gaps into an evaluation file
    Mkeval {
        #[arg(long)]
        segments: PathBuf,
        #[arg(long, default_value_t = 2.75)]
        gap: f64,
        #[arg(long, default_value = "eval.wav")]
        out: PathBuf,
        /// Defaults to `<out stem>_truth.csv`
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Defaults to `<out stem>_spec`; `.pgm` and `.csv` are written
        #[arg(long)]
        spectrogram: Option<PathBuf>,
    },
    /// Convert an AudioSet segments CSV into a local manifest
    ConvertAudiosetManifest {
        #[arg(long)]
        segments: PathBuf,
        /// class_labels_indices.csv
        #[arg(long)]
        label_map: PathBuf,
        #[arg(long)]
        audio_dir: PathBuf,
        #[arg(long, default_value = "manifest.csv")]
        out: PathBuf,
    },
    /// Write a synthetic labelled corpus and its manifest
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 120)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        background: usize,
        #[arg(long, default_value_t = 0.975)]
        clip_seconds: f64,
    },
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.threshold {
            cfg.query.threshold = v;
        }
        if let Some(v) = self.train_fraction {
            cfg.data.train_fraction = v;
        }
        if self.strict_labels {
            cfg.data.strict_labels = true;
        }
        if let Some(v) = self.trees {
            cfg.forest.n_trees = v;
        }
        if let Some(v) = self.patch_frames {
            cfg.frontend.patch_frames = v;
        }
        if let Some(v) = self.embedding {
            cfg.embedding = v;
        }
        if let Some(p) = &self.embeddings {
            cfg.paths.embeddings = Some(p.clone());
            cfg.embedding = EmbeddingChoice::External;
        }
        if let Some(v) = self.balance_target {
            cfg.data.balance_target = Some(v);
        }
        if let Some(v) = self.min_duration {
            cfg.query.min_duration_s = v;
        }
        if let Some(v) = self.merge_gap {
            cfg.query.merge_gap_s = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn required(path: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.or_else(|| fallback.clone())
        .ok_or_else(|| Error::InvalidConfig(format!("no {what} path given")))
}

fn model_path(path: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    path.or_else(|| cfg.paths.model.clone())
        .unwrap_or_else(|| DEFAULT_MODEL.into())
}

fn sibling(out: &std::path::Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

/// Run one parsed invocation, writing primary output to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let mut cfg = cli.overrides.resolve()?;
    let emit = |out: &mut dyn Write, s: &str| {
        out.write_all(s.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))
    };
    match cli.command {
        Command::Featurize { manifest, out, grid } => {
            let manifest = required(manifest, &cfg.paths.manifest, "manifest")?;
            let s = commands::cmd_featurize(&cfg, &manifest, &out, &grid)?;
            emit(stdout, &format!("{} clips, {} rows, dimension {}\n", s.clips, s.rows, s.dimension))
        }
        Command::Train { manifest, features, model, report } => {
            let manifest = required(manifest, &cfg.paths.manifest, "manifest")?;
            let model = model_path(model, &cfg);
            cfg.paths.model = Some(model.clone());
            let s = commands::cmd_train(&cfg, &manifest, &features, &model, report.as_deref())?;
            let mut msg = format!(
                "trained {} classes x {} trees on {} samples ({} augmented)\n",
                s.model.n_classes(),
                cfg.forest.n_trees,
                s.train_samples,
                s.augmentations
            );
            if let (Some(r), Some(acc)) = (&s.report, s.subset_accuracy) {
                msg.push_str(&format!("holdout: {} clips, exact-match accuracy {:.2}%\n", s.holdout_clips, acc * 100.0));
                msg.push_str(&r.to_text());
            }
            emit(stdout, &msg)
        }
        Command::Query { audio, model, format, keyword } => {
            let model = model_path(model, &cfg);
            let text = commands::cmd_query(&cfg, &audio, &model, &keyword.join(" "), format)?;
            emit(stdout, &text)
        }
        Command::Eval { audio, truth, model, report, keywords } => {
            let model = model_path(model, &cfg);
            let o = commands::cmd_eval(&cfg, &audio, &truth, &model, &keywords, Some(&report))?;
            emit(stdout, &o.report.to_text())
        }
        Command::Mkeval { segments, gap, out, truth, spectrogram } => {
            let truth = truth.unwrap_or_else(|| sibling(&out, "_truth.csv"));
            let spec = spectrogram.unwrap_or_else(|| sibling(&out, "_spec"));
            let s = commands::cmd_mkeval(&cfg, &segments, gap, &out, &truth, &spec)?;
            emit(stdout, &format!("{:.2} s, {} cells\n", s.duration_s, s.n_cells))
        }
        Command::ConvertAudiosetManifest { segments, label_map, audio_dir, out } => {
            let (n, skipped) = commands::cmd_convert_audioset(&cfg, &segments, &label_map, &audio_dir, &out)?;
            emit(stdout, &format!("{n} entries written, {skipped} rows without a selected class skipped\n"))
        }
        Command::Synth { out_dir, per_class, background, clip_seconds } => {
            let n = commands::cmd_synth(&cfg, &out_dir, per_class, background, clip_seconds)?;
            emit(stdout, &format!("{n} clips written\n"))
        }
    }
}

/// Process entry point; returns the exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AIR_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = std::panic::catch_unwind(|| run(cli, &mut std::io::stdout().lock()));
    match outcome {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("error: internal invariant violated (panic)");
            4
        }
    }
}
