//! Non-autoregressive accent conversion with voice cloning.
//!
//! The crate is organized around the stages of the conversion pipeline:
//!
//! - [`dsp`] — audio I/O, resampling, mel-spectrogram front end and NCCF pitch
//! - [`autodiff`] — reverse-mode differentiation over dense tensors
//! - [`nn`] — reusable architectural blocks (Jasper, Conformer, FFT stacks, ...)
//! - [`losses`] — the training objectives (dual cross-entropy, CTC, AAM, masked mel MSE)
//! - [`models`] — the five networks assembled from blocks, plus the ablation variant
//! - [`pipeline`] — end-to-end conversion, chunked streaming, latency benchmarking, training
//! - [`eval`] — text normalization, tokenizer, greedy CTC decoding, WER/CER, MOS statistics
//! - [`persist`] — checkpoints, dataset manifests, synthetic corpus generation, config

pub mod autodiff;
pub mod dsp;
pub mod eval;
pub mod losses;
pub mod models;
pub mod nn;
pub mod persist;
pub mod pipeline;

pub use autodiff::{Graph, NodeId, Scalar, Tensor};
pub use dsp::{AudioBuffer, DspConfig, MelSpectrogram, PitchContour};
