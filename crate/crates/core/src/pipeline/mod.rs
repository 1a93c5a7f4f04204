//! End-to-end conversion with voice-profile overrides, chunked streaming
//! with a latency contract, the latency/RTFX benchmark protocol, and the
//! staged training driver.

mod bench;
mod convert;
mod stream;
mod train;

pub use bench::{benchmark, BenchmarkReport};
pub use convert::{convert, profile_from_audio};
pub use stream::stream_convert;
pub use train::{train, TrainConfig, TrainRecord, TrainReport};

use crate::dsp::DspError;
use crate::losses::LossError;
use crate::models::{Embedding, EmbeddingKind, ModelError, Stage};
use crate::persist::PersistError;
use thiserror::Error;

/// Pitch search range handed to the extractor (Hz).
pub const PITCH_F0_MIN: f64 = 60.0;
pub const PITCH_F0_MAX: f64 = 400.0;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("empty audio")]
    EmptyAudio,
    #[error("pipeline expects {expected} Hz input, got {got} Hz")]
    WrongSampleRate { expected: u32, got: u32 },
    #[error("chunk {index} has {samples} samples, below one hop ({hop})")]
    ChunkTooShort {
        index: usize,
        samples: usize,
        hop: usize,
    },
    #[error("stream has no chunks")]
    NoChunks,
    #[error("stage {stage:?} requires previously trained {needs:?}")]
    MissingPrerequisite { stage: Stage, needs: Stage },
    #[error("corpus mismatch: {0}")]
    CorpusMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

/// How the output voice should sound: embeddings copied from some audio
/// sample plus a pitch policy.
#[derive(Debug, Clone)]
pub struct VoiceProfile {
    pub accent: Embedding,
    pub gender: Embedding,
    pub speaker: Embedding,
    pub pitch_policy: PitchPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PitchPolicy {
    /// Keep the source contour.
    Passthrough,
    /// Force every voiced frame to a constant f0 (Hz).
    Flat(f64),
    /// Multiply voiced f0 by a positive factor.
    Scale(f64),
}

impl VoiceProfile {
    pub fn new(accent: Embedding, gender: Embedding, speaker: Embedding) -> Self {
        assert_eq!(accent.kind, EmbeddingKind::Accent);
        assert_eq!(gender.kind, EmbeddingKind::Gender);
        assert_eq!(speaker.kind, EmbeddingKind::Speaker);
        VoiceProfile {
            accent,
            gender,
            speaker,
            pitch_policy: PitchPolicy::Passthrough,
        }
    }

    pub fn with_pitch_policy(mut self, policy: PitchPolicy) -> Self {
        if let PitchPolicy::Scale(k) = policy {
            assert!(k > 0.0, "pitch scale must be positive");
        }
        self.pitch_policy = policy;
        self
    }

    pub(crate) fn apply_pitch_policy(&self, pitch: &mut crate::dsp::PitchContour) {
        match self.pitch_policy {
            PitchPolicy::Passthrough => {}
            PitchPolicy::Flat(f0) => {
                for (f, &v) in pitch.f0.iter_mut().zip(&pitch.voiced) {
                    if v {
                        *f = f0;
                    }
                }
            }
            PitchPolicy::Scale(k) => {
                for (f, &v) in pitch.f0.iter_mut().zip(&pitch.voiced) {
                    if v {
                        *f *= k;
                    }
                }
            }
        }
    }
}

/// Where the stream takes its voice profile from. It is fixed before
/// streaming starts and never refreshed mid-stream.
#[derive(Debug, Clone)]
pub enum ProfileSource {
    FirstChunk,
    Enrollment(crate::dsp::AudioBuffer),
}

#[derive(Debug, Clone)]
pub struct StreamConfig {
    /// Chunk granularity; the pipeline operates on segments of at most 0.2 s.
    pub chunk_seconds: f64,
    /// Mel frames of left context prepended to each chunk (output frames
    /// for the context are discarded).
    pub left_context_frames: usize,
    pub profile_source: ProfileSource,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            chunk_seconds: 0.2,
            left_context_frames: 8,
            profile_source: ProfileSource::FirstChunk,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self, hop: usize, sample_rate: u32) -> Result<(), PipelineError> {
        let chunk_samples = (self.chunk_seconds * sample_rate as f64) as usize;
        if self.chunk_seconds > 0.2 || chunk_samples < hop {
            return Err(PipelineError::ChunkTooShort {
                index: 0,
                samples: chunk_samples,
                hop,
            });
        }
        Ok(())
    }
}

/// Wall-latency measurements for repeated conversions of the same audio.
#[derive(Debug, Clone)]
pub struct LatencyReport {
    pub iterations: usize,
    pub latencies_ms: Vec<f64>,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    /// Audio seconds processed per wall second.
    pub rtfx: f64,
}

impl LatencyReport {
    /// Build from raw per-iteration latencies and the duration of the
    /// audio processed per iteration. Percentiles are nearest-rank over
    /// the empirical distribution.
    pub fn from_latencies(latencies_ms: Vec<f64>, audio_seconds: f64) -> Self {
        assert!(!latencies_ms.is_empty());
        let n = latencies_ms.len();
        let mean_ms = latencies_ms.iter().sum::<f64>() / n as f64;
        let mut sorted = latencies_ms.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = |q: f64| sorted[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
        let total_wall_s = latencies_ms.iter().sum::<f64>() / 1000.0;
        LatencyReport {
            iterations: n,
            mean_ms,
            p50_ms: rank(0.50),
            p95_ms: rank(0.95),
            rtfx: audio_seconds * n as f64 / total_wall_s,
            latencies_ms,
        }
    }
}
