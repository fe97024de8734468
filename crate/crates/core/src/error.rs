use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the pipeline can report. Variants are grouped by the stage
/// that raises them; [`Error::exit_code`] maps them onto the CLI contract.
#[derive(Debug, Error)]
pub enum Error {
    // audio_io
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt audio file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("audio contains no samples: {0}")]
    EmptyAudio(String),
    #[error("range [{start_s}, {end_s}) outside clip of {duration_s} s")]
    OutOfRange {
        start_s: f64,
        end_s: f64,
        duration_s: f64,
    },

    // dsp
    #[error("clip has {samples} samples, fewer than one {window}-sample window")]
    ClipTooShort { samples: usize, window: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    // dataset
    #[error("malformed row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("unknown class label {label:?} at row {line} (strict mode)")]
    UnknownClassStrict { line: usize, label: String },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("invalid augmentation recipe: {0}")]
    InvalidRecipe(String),
    #[error("class {0:?} has no original samples to augment")]
    EmptyClass(String),
    #[error("invalid ontology: {0}")]
    InvalidOntology(String),

    // embedding
    #[error("embedding grid mismatch: {0}")]
    GridMismatch(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("malformed file: {0}")]
    MalformedFile(String),

    // forest
    #[error("class {0:?} is degenerate (all samples positive or all negative)")]
    DegenerateClass(String),
    #[error("bad magic bytes in model file")]
    BadMagic,
    #[error("model format version mismatch: found {found}, supported {supported}")]
    VersionMismatch { found: String, supported: String },

    // metrics / retrieval
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("ROC AUC needs both positive and negative ground truth")]
    OneClassOnly,
    #[error("timeline cells [{first_cell}, {end_cell}) are covered by no patch")]
    CoverageGap { first_cell: usize, end_cell: usize },
    #[error("query {query:?} matches no class; known classes: {known}")]
    NoMatch { query: String, known: String },
    #[error("model frontend hash {model:016x} does not match current configuration {current:016x}")]
    FrontendMismatch { model: u64, current: u64 },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 input/config, 3 query without match, 4 invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NoMatch { .. } => 3,
            Error::Invariant(_) => 4,
            _ => 2,
        }
    }
}
