//! Persistence: the flat binary checkpoint format, JSONL dataset
//! manifests, deterministic synthetic-corpus generation, and the text
//! config file.

mod checkpoint;
mod config;
mod corpus;
mod manifest;

pub use checkpoint::{
    bundle_to_checkpoint, load_bundle, load_into_bundle, read_checkpoint, save_bundle,
    write_checkpoint, Checkpoint, CheckpointEntry, CKPT_MAGIC, CKPT_VERSION,
};
pub use config::{parse_config, PipelineConfig};
pub use corpus::{generate_synthetic_corpus, CorpusSpec};
pub use manifest::{parse_manifest, write_manifest, ManifestRecord};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint magic (expected \"ACVC\")")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(String),
    #[error("checkpoint entry `{name}`: shape {got:?} does not match model shape {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("checkpoint is missing tensor `{0}`")]
    MissingTensor(String),
    #[error("checkpoint declares unknown preset tag {0}")]
    UnknownPreset(String),
    #[error("manifest line {line}: {message}")]
    ManifestLine { line: usize, message: String },
    #[error("config line {line}: {message}")]
    ConfigLine { line: usize, message: String },
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
}
