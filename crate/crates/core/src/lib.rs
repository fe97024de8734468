//! Keyword-driven retrieval of sound event intervals.
//!
//! Audio is turned into log-mel patches, each patch into a feature vector,
//! and a one-vs-rest random forest scores every patch per class. Scores are
//! rasterised onto a 0.01 s grid, thresholded and merged into intervals.

pub mod audio_io;
pub mod cli;
pub mod dataset;
pub mod dsp;
pub mod embedding;
pub mod error;
pub mod forest;
pub mod metrics;
pub mod retrieval;
mod util;

pub use error::{Error, Result};
pub use util::{derive_seed, fmt_sig};
