//! Reusable architectural blocks: Jasper stacks, attention-pooling decoders,
//! Sinc band-pass convolution, the x-vector stack, Conformer blocks,
//! feed-forward-Transformer stacks, sub/upsamplers and embedding conditioning.
//!
//! Blocks own their parameters as plain tensors, so a frozen block is
//! immutable and freely shareable across threads. Forward passes register
//! parameters onto the caller's graph by stable dotted names; the same names
//! come back out of [`Module::visit`], which is what checkpointing, counting
//! and the optimizer iterate over.

mod common;
mod condition;
mod conformer;
mod fft;
mod jasper;
mod pooling;
mod sampler;
mod sinc;
mod xvector;

pub use common::{
    dropout, leaf, sinusoidal_positions, xavier_tensor, BatchNorm1d, Ctx, Linear,
    MultiHeadAttention, VarKind,
};
pub use condition::Condition;
pub use conformer::ConformerBlock;
pub use fft::{FftChain, FftStack};
pub use jasper::JasperStack;
pub use pooling::AttentionPoolingDecoder;
pub use sampler::{Subsample4, Upsample4};
pub use sinc::SincConv;
pub use xvector::XVectorStack;

use crate::autodiff::{Scalar, Tensor};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input has {frames} frames, below the receptive field of {required}")]
    BelowReceptiveField { frames: usize, required: usize },
    #[error("expected {expected} Hz input, got {got} Hz")]
    WrongSampleRate { expected: u32, got: u32 },
    #[error("empty input (T = 0)")]
    EmptyInput,
}

/// Named tensors a block owns: trainable parameters or persistent buffers
/// (batch-norm running statistics).
pub trait Module<T: Scalar> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t, kind| {
            if matches!(kind, VarKind::Param) {
                n += t.numel();
            }
        });
        n
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit(&mut |name, _, kind| {
            if matches!(kind, VarKind::Param) {
                names.push(name.to_string());
            }
        });
        names
    }
}

/// Model sizing: `paper` carries the published dimensions, `toy` scales the
/// internal widths and depths down for desk-scale tests and training. The
/// cross-model interface dims (192/512-d embeddings, 80 mel bands, vocab
/// 128 + blank) are identical in both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub kind: PresetKind,
    // jasper
    pub jasper_channels: usize,
    pub jasper_kernel: usize,
    // attention pooling decoders
    pub attn_hidden: usize,
    pub embedding_dim: usize,
    // sinc front end + x-vector stack (16 kHz path)
    pub sinc_channels: usize,
    pub sinc_kernel: usize,
    pub sinc_stride: usize,
    pub xvec_channels: usize,
    pub speaker_dim: usize,
    // conformer encoder
    pub conformer_layers: usize,
    pub conformer_dim: usize,
    pub conformer_heads: usize,
    pub conformer_ff_mult: usize,
    pub conformer_conv_kernel: usize,
    // speech-to-phonetics head
    pub phonetic_dim: usize,
    pub stp_accent_stacks: usize,
    pub stp_fft_inner: usize,
    pub stp_heads: usize,
    // spectrogram generator
    pub sts_dim: usize,
    pub sts_inner: usize,
    pub sts_heads: usize,
    pub sts_encoder_stacks: usize,
    pub sts_decoder_stacks: usize,
    pub fft_kernel: usize,
    // shared
    pub dropout: f64,
    pub vocab_size: usize,
    pub n_mels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetKind {
    Paper,
    Toy,
}

impl Preset {
    /// Published dimensions: 12 Conformer modules at 512, FFT stacks at
    /// 1536/384, 192/512-d embeddings, vocabulary 128 plus blank.
    pub fn paper() -> Self {
        Preset {
            kind: PresetKind::Paper,
            jasper_channels: 256,
            jasper_kernel: 11,
            attn_hidden: 128,
            embedding_dim: 192,
            sinc_channels: 80,
            sinc_kernel: 251,
            sinc_stride: 10,
            xvec_channels: 512,
            speaker_dim: 512,
            conformer_layers: 12,
            conformer_dim: 512,
            conformer_heads: 8,
            conformer_ff_mult: 4,
            conformer_conv_kernel: 31,
            phonetic_dim: 512,
            stp_accent_stacks: 2,
            stp_fft_inner: 2048,
            stp_heads: 2,
            sts_dim: 384,
            sts_inner: 1536,
            sts_heads: 2,
            sts_encoder_stacks: 6,
            sts_decoder_stacks: 6,
            fft_kernel: 3,
            dropout: 0.1,
            vocab_size: 128,
            n_mels: 80,
        }
    }

    /// Every internal width/depth scaled down (roughly 8-16x) so the whole
    /// staged training fits in a desk-scale test budget. Dropout is off:
    /// the toy corpus is meant to be overfit.
    pub fn toy() -> Self {
        Preset {
            kind: PresetKind::Toy,
            jasper_channels: 16,
            jasper_kernel: 5,
            attn_hidden: 16,
            embedding_dim: 192,
            sinc_channels: 8,
            sinc_kernel: 65,
            sinc_stride: 32,
            xvec_channels: 16,
            speaker_dim: 512,
            conformer_layers: 2,
            conformer_dim: 32,
            conformer_heads: 2,
            conformer_ff_mult: 2,
            conformer_conv_kernel: 7,
            phonetic_dim: 64,
            stp_accent_stacks: 2,
            stp_fft_inner: 128,
            stp_heads: 2,
            sts_dim: 48,
            sts_inner: 96,
            sts_heads: 2,
            sts_encoder_stacks: 2,
            sts_decoder_stacks: 2,
            fft_kernel: 3,
            dropout: 0.0,
            vocab_size: 128,
            n_mels: 80,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self.kind {
            PresetKind::Paper => "paper",
            PresetKind::Toy => "toy",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "paper" => Some(Preset::paper()),
            "toy" => Some(Preset::toy()),
            _ => None,
        }
    }
}
