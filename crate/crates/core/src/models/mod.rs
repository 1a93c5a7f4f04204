//! The five networks assembled from the reusable blocks: accent/gender
//! embedding, speaker embedding, speech-to-phonetics, spectrogram
//! generation, and the vocoder substitute — plus the ablation variant
//! with all accent/gender conditioning paths removed.

mod aege;
mod params;
mod se;
mod stp;
mod sts;
mod vocoder;

pub use aege::{AegeModel, AegeOutput};
pub use params::{planned_counts, ParamCounts};
pub use se::SeModel;
pub use stp::StpModel;
pub use sts::StsModel;
pub use vocoder::{griffin_lim_vocode, load_external_vocoder, GriffinLim, MelVocoder};

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Scalar, Tensor};
use crate::dsp::DspError;
use crate::nn::{Module, Preset, VarKind};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty mel spectrogram")]
    EmptyMel,
    #[error("embedding kind mismatch: expected {expected:?}, got {got:?}")]
    KindMismatch {
        expected: EmbeddingKind,
        got: EmbeddingKind,
    },
    #[error("pitch grid has {got} frames, model expects {expected}")]
    GridMismatch { expected: usize, got: usize },
    #[error("audio has {samples} samples, below the receptive field of {required}")]
    AudioTooShort { samples: usize, required: usize },
    #[error("mel geometry mismatch: {0}")]
    MelGeometry(String),
    #[error("model requires an accent embedding (non-ablation bundle)")]
    MissingEmbedding,
    #[error("bundle has no AE/GE model (ablation mode)")]
    MissingAege,
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("checkpoint error: {0}")]
    Persist(String),
}

/// What an embedding summarizes: accent and gender are 192-d, speaker
/// identity is 512-d.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingKind {
    Accent,
    Gender,
    Speaker,
}

impl EmbeddingKind {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingKind::Accent | EmbeddingKind::Gender => 192,
            EmbeddingKind::Speaker => 512,
        }
    }
}

/// Fixed-length voice-characteristic vector. Consumers normalize before
/// projecting, so raw magnitudes are preserved here.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub kind: EmbeddingKind,
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn new(kind: EmbeddingKind, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), kind.dim(), "embedding length for {kind:?}");
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Embedding { kind, values }
    }

    pub fn zeros(kind: EmbeddingKind) -> Self {
        Embedding::new(kind, vec![0.0; kind.dim()])
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_f64s(&[self.values.len()], &self.values)
    }

    pub fn cosine(&self, other: &Embedding) -> f64 {
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        let na: f64 = self.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = other.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        dot / (na * nb + 1e-12)
    }
}

/// Output of the speech-to-phonetics model: hidden frames for the
/// spectrogram generator and token log-probabilities for decoding/eval.
#[derive(Debug, Clone)]
pub struct PhoneticFeatures<T: Scalar> {
    /// `[T', phonetic_dim]` hidden frames, `T' = ceil(T/4)` of the source mel.
    pub frames: Tensor<T>,
    /// `[T', vocab + 1]` per-step log-probabilities (blank last).
    pub token_log_probs: Tensor<T>,
}

/// The training stages, in prerequisite order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Aege,
    Se,
    Stp,
    Sts,
    Ablation,
}

impl Stage {
    pub fn tag(&self) -> &'static str {
        match self {
            Stage::Aege => "aege",
            Stage::Se => "se",
            Stage::Stp => "stp",
            Stage::Sts => "sts",
            Stage::Ablation => "ablation",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Stage> {
        match tag {
            "aege" => Some(Stage::Aege),
            "se" => Some(Stage::Se),
            "stp" => Some(Stage::Stp),
            "sts" => Some(Stage::Sts),
            "ablation" => Some(Stage::Ablation),
            _ => None,
        }
    }
}

/// All model parameter sets plus bundle-level configuration.
///
/// A frozen bundle is immutable and shareable across threads; training
/// mutates exactly one model's parameters at a time.
pub struct ModelBundle<T: Scalar> {
    pub preset: Preset,
    pub accent_classes: usize,
    pub ablation: bool,
    /// Absent in ablation mode: the conditioning paths genuinely do not exist.
    pub aege: Option<AegeModel<T>>,
    pub se: SeModel<T>,
    pub stp: StpModel<T>,
    pub sts: StsModel<T>,
    pub vocoder: GriffinLim,
    pub trained_stages: BTreeSet<Stage>,
    /// Recorded preprocessing choice: mel features are fed raw (no
    /// per-feature mean/variance normalization).
    pub mel_normalized: bool,
}

impl<T: Scalar> ModelBundle<T> {
    pub fn new(preset: Preset, accent_classes: usize, ablation: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let aege = (!ablation).then(|| AegeModel::new("aege", &preset, accent_classes, &mut rng));
        let se = SeModel::new("se", &preset, &mut rng);
        let stp = StpModel::new("stp", &preset, !ablation, &mut rng);
        let sts = StsModel::new("sts", &preset, !ablation, &mut rng);
        ModelBundle {
            preset,
            accent_classes,
            ablation,
            aege,
            se,
            stp,
            sts,
            vocoder: GriffinLim::default(),
            trained_stages: BTreeSet::new(),
            mel_normalized: false,
        }
    }

    /// Trainable parameter counts per model and the composite.
    pub fn count_parameters(&self) -> ParamCounts {
        let aege = self.aege.as_ref().map(|m| m.param_count()).unwrap_or(0);
        let se = self.se.param_count();
        let stp = self.stp.param_count();
        let sts = self.sts.param_count();
        ParamCounts {
            aege,
            se,
            stp,
            sts,
            full_sts: aege + se + stp + sts,
            vocoder: 0, // Griffin-Lim substitute has no trainable parameters
        }
    }
}

impl<T: Scalar> Module<T> for ModelBundle<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        if let Some(aege) = &self.aege {
            aege.visit(f);
        }
        self.se.visit(f);
        self.stp.visit(f);
        self.sts.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        if let Some(aege) = &mut self.aege {
            aege.visit_mut(f);
        }
        self.se.visit_mut(f);
        self.stp.visit_mut(f);
        self.sts.visit_mut(f);
    }
}
