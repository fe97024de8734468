use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{AugmentSpec, Ontology};
use crate::dsp::FrontendConfig;
use crate::embedding::EmbeddingSource;
use crate::error::{Error, Result};
use crate::forest::ForestParams;
use crate::retrieval::{DEFAULT_MERGE_GAP_S, DEFAULT_MIN_DURATION_S, DEFAULT_THRESHOLD};

pub const TOOL_VERSION: &str = concat!("air ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingChoice {
    #[default]
    Stats,
    Flat,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OntologyConfig {
    /// Empty means the six default classes.
    pub classes: Vec<String>,
    /// Extra keyword → class name aliases.
    pub aliases: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_fraction: f64,
    pub strict_labels: bool,
    /// Per-class positive count to augment the training split up to.
    pub balance_target: Option<usize>,
    pub augment: AugmentSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train_fraction: 0.8,
            strict_labels: false,
            balance_target: None,
            augment: AugmentSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryConfig {
    pub threshold: f64,
    pub min_duration_s: f64,
    pub merge_gap_s: f64,
}

impl Default for QueryConfig {
    fn default() -> Self {
        QueryConfig {
            threshold: DEFAULT_THRESHOLD,
            min_duration_s: DEFAULT_MIN_DURATION_S,
            merge_gap_s: DEFAULT_MERGE_GAP_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub manifest: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub embedding: EmbeddingChoice,
    pub frontend: FrontendConfig,
    pub forest: ForestParams,
    pub ontology: OntologyConfig,
    pub data: DataConfig,
    pub query: QueryConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            embedding: EmbeddingChoice::default(),
            frontend: FrontendConfig::default(),
            forest: ForestParams::default(),
            ontology: OntologyConfig::default(),
            data: DataConfig::default(),
            query: QueryConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.frontend.validate_for_grid()?;
        self.forest.validate()?;
        self.data.augment.validate()?;
        let f = self.data.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidConfig(format!("train_fraction {f} outside (0, 1)")));
        }
        let q = &self.query;
        if !(q.threshold > 0.0 && q.threshold < 1.0) {
            return Err(Error::InvalidConfig(format!("threshold {} outside (0, 1)", q.threshold)));
        }
        if !(q.min_duration_s >= 0.0 && q.merge_gap_s >= 0.0) {
            return Err(Error::InvalidConfig("min_duration_s and merge_gap_s must be >= 0".into()));
        }
        self.ontology()?;
        Ok(())
    }

    pub fn ontology(&self) -> Result<Ontology> {
        let mut o = if self.ontology.classes.is_empty() {
            Ontology::default_six()
        } else {
            Ontology::new(self.ontology.classes.clone())?
        };
        for (alias, class) in &self.ontology.aliases {
            o = o.with_alias(alias, class)?;
        }
        Ok(o)
    }

    pub fn embedding_source(&self, external_dimension: Option<usize>) -> Result<EmbeddingSource> {
        let f = &self.frontend;
        Ok(match self.embedding {
            EmbeddingChoice::Stats => EmbeddingSource::builtin_stats(f.n_mels),
            EmbeddingChoice::Flat => EmbeddingSource::builtin_flat(f.n_mels, f.patch_frames),
            EmbeddingChoice::External => EmbeddingSource {
                kind: crate::embedding::EmbeddingKind::ExternalFile,
                dimension: external_dimension.ok_or_else(|| {
                    Error::InvalidConfig("external embeddings need an AIREMB1 file".into())
                })?,
                descriptor: "external:AIREMB1".into(),
            },
        })
    }

    pub fn provenance_json(&self) -> serde_json::Value {
        serde_json::json!({ "tool": TOOL_VERSION, "config": self })
    }

    /// Single-line JSON of the resolved configuration plus tool version.
    pub fn provenance(&self) -> String {
        self.provenance_json().to_string()
    }

    /// Comment lines for text artifacts.
    pub fn provenance_comments(&self) -> Vec<String> {
        vec![self.provenance()]
    }
}
