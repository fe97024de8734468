//! Manifests, the class ontology, splitting, augmentation and evaluation
//! file construction.

mod audioset;
mod augment;
mod evalfile;
mod manifest;
mod ontology;
pub mod synth;

pub use audioset::{convert_audioset, read_label_map, Converted};
pub use augment::{
    augment, balance_classes, split, train_size, AugmentSpec, AugmentStep, Balanced,
};
pub use evalfile::{
    assemble_eval_clip, build_eval_file, grid_len, seconds_to_cell, GroundTruthTimeline,
};
pub use manifest::{
    parse_manifest, parse_manifest_from, write_manifest, write_manifest_to, ManifestEntry,
    ParsedManifest, MANIFEST_HEADER,
};
pub use ontology::{normalize_tokens, LabelSet, Ontology, DEFAULT_CLASSES};
