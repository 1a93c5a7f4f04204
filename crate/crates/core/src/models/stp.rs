//! Speech-to-phonetics model: 4x subsampler, Conformer encoder, accent
//! conditioning, an FFT-architecture accent encoder, and a single-layer
//! convolutional decoder over the token vocabulary plus blank.
//!
//! The hidden frames leaving the accent encoder feed the spectrogram
//! generator; the token log-probs exist for the CTC loss and decoding.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ops, Graph, NodeId, Scalar, Tensor};
use crate::dsp::MelSpectrogram;
use crate::nn::{
    Condition, ConformerBlock, Ctx, FftChain, Linear, Module, Preset, Subsample4, VarKind,
};

use super::{Embedding, EmbeddingKind, ModelError, PhoneticFeatures};

pub struct StpModel<T: Scalar> {
    subsample: Subsample4<T>,
    conformer: Vec<ConformerBlock<T>>,
    /// Present when the conformer width differs from the phonetic width.
    out_proj: Option<Linear<T>>,
    /// Accent conditioning; absent in ablation mode.
    condition: Option<Condition<T>>,
    accent_encoder: FftChain<T>,
    decoder: Linear<T>, // single-layer pointwise conv == per-frame linear
    pub phonetic_dim: usize,
    pub vocab_size: usize,
}

impl<T: Scalar> StpModel<T> {
    pub fn new(name: &str, preset: &Preset, conditioned: bool, rng: &mut ChaCha8Rng) -> Self {
        let subsample = Subsample4::new(
            &format!("{name}.subsample"),
            preset.n_mels,
            preset.conformer_dim,
            rng,
        );
        let conformer = (0..preset.conformer_layers)
            .map(|i| {
                ConformerBlock::new(
                    &format!("{name}.conformer.{i}"),
                    preset.conformer_dim,
                    preset.conformer_heads,
                    preset.conformer_ff_mult,
                    preset.conformer_conv_kernel,
                    preset.dropout,
                    rng,
                )
            })
            .collect();
        let out_proj = (preset.conformer_dim != preset.phonetic_dim).then(|| {
            Linear::new(
                format!("{name}.out_proj"),
                preset.conformer_dim,
                preset.phonetic_dim,
                true,
                rng,
            )
        });
        let condition = conditioned.then(|| {
            Condition::new(
                &format!("{name}.condition"),
                preset.embedding_dim,
                preset.phonetic_dim,
                rng,
            )
        });
        let accent_encoder = FftChain::new(
            &format!("{name}.accent_encoder"),
            preset.stp_accent_stacks,
            preset.phonetic_dim,
            preset.stp_fft_inner,
            preset.stp_heads,
            preset.fft_kernel,
            preset.dropout,
            rng,
        );
        let decoder = Linear::new(
            format!("{name}.decoder"),
            preset.phonetic_dim,
            preset.vocab_size + 1,
            true,
            rng,
        );
        StpModel {
            subsample,
            conformer,
            out_proj,
            condition,
            accent_encoder,
            decoder,
            phonetic_dim: preset.phonetic_dim,
            vocab_size: preset.vocab_size,
        }
    }

    pub fn is_conditioned(&self) -> bool {
        self.condition.is_some()
    }

    /// `mel` is `[n_mels, T]`; returns `(frames [T', pdim], log_probs [T', V+1])`.
    pub fn forward_graph(
        &self,
        g: &mut Graph<T>,
        ctx: &mut Ctx<T>,
        mel: NodeId,
        accent_emb: Option<NodeId>,
    ) -> Result<(NodeId, NodeId), ModelError> {
        if g.value(mel).shape()[1] == 0 {
            return Err(ModelError::EmptyMel);
        }
        let h = self.subsample.forward(g, ctx, mel); // [d_conf, T']
        let mut x = ops::transpose(g, h, 0, 1); // [T', d_conf]
        for block in &self.conformer {
            x = block.forward(g, ctx, x, None);
        }
        if let Some(proj) = &self.out_proj {
            x = proj.forward(g, ctx, x); // [T', pdim]
        }
        if let Some(cond) = &self.condition {
            let emb = accent_emb.ok_or(ModelError::MissingEmbedding)?;
            x = cond.forward(g, ctx, x, emb);
        }
        let frames = self.accent_encoder.forward(g, ctx, x);
        let logits = self.decoder.forward(g, ctx, frames);
        let log_probs = ops::log_softmax(g, logits, 1);
        Ok((frames, log_probs))
    }

    /// Inference-mode pass. Non-ablation models require an accent
    /// embedding of the right kind; the ablation variant has no
    /// conditioning path and ignores the argument entirely.
    pub fn forward(
        &self,
        mel: &MelSpectrogram,
        accent_emb: Option<&Embedding>,
    ) -> Result<PhoneticFeatures<T>, ModelError> {
        let accent_node_input = if self.condition.is_some() {
            let emb = accent_emb.ok_or(ModelError::MissingEmbedding)?;
            if emb.kind != EmbeddingKind::Accent {
                return Err(ModelError::KindMismatch {
                    expected: EmbeddingKind::Accent,
                    got: emb.kind,
                });
            }
            Some(emb.to_tensor::<T>())
        } else {
            None
        };
        let mut g = Graph::new();
        let mut ctx = Ctx::infer();
        let mel_node = g.constant(mel.to_tensor::<T>());
        let accent_node = accent_node_input.map(|t| g.constant(t));
        let (frames, log_probs) = self.forward_graph(&mut g, &mut ctx, mel_node, accent_node)?;
        Ok(PhoneticFeatures {
            frames: g.value(frames).clone(),
            token_log_probs: g.value(log_probs).clone(),
        })
    }
}

impl<T: Scalar> Module<T> for StpModel<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        self.subsample.visit(f);
        for c in &self.conformer {
            c.visit(f);
        }
        if let Some(p) = &self.out_proj {
            p.visit(f);
        }
        if let Some(c) = &self.condition {
            c.visit(f);
        }
        self.accent_encoder.visit(f);
        self.decoder.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        self.subsample.visit_mut(f);
        for c in &mut self.conformer {
            c.visit_mut(f);
        }
        if let Some(p) = &mut self.out_proj {
            p.visit_mut(f);
        }
        if let Some(c) = &mut self.condition {
            c.visit_mut(f);
        }
        self.accent_encoder.visit_mut(f);
        self.decoder.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{mel_spectrogram, AudioBuffer, DspConfig};
    use rand::SeedableRng;

    fn toy_model(conditioned: bool) -> StpModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        StpModel::new("stp", &Preset::toy(), conditioned, &mut rng)
    }

    fn mel_of_frames(n_samples: usize) -> MelSpectrogram {
        let audio = AudioBuffer::sine(220.0, n_samples as f64 / 22050.0, 0.5, 22050);
        mel_spectrogram(&audio, &DspConfig::default()).unwrap()
    }

    fn random_accent(seed: u64) -> Embedding {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Embedding::new(
            EmbeddingKind::Accent,
            (0..192).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

    #[test]
    fn hundred_frames_give_25_steps_of_129_logprobs() {
        let model = toy_model(true);
        let mel = mel_of_frames(99 * 256); // exactly 100 frames
        assert_eq!(mel.n_frames(), 100);
        let out = model.forward(&mel, Some(&random_accent(3))).unwrap();
        assert_eq!(out.frames.shape(), &[25, 64]);
        assert_eq!(out.token_log_probs.shape(), &[25, 129]);
    }

    #[test]
    fn log_prob_rows_normalize() {
        let model = toy_model(true);
        let mel = mel_of_frames(8000);
        let out = model.forward(&mel, Some(&random_accent(4))).unwrap();
        let t = out.token_log_probs.shape()[0];
        for row in 0..t {
            let sum: f64 = out.token_log_probs.data()[row * 129..(row + 1) * 129]
                .iter()
                .map(|lp| lp.exp())
                .sum();
            assert!((sum - 1.0).abs() < 1e-6, "row {row}: {sum}");
        }
    }

    #[test]
    fn accent_embedding_changes_log_probs() {
        let model = toy_model(true);
        let mel = mel_of_frames(6000);
        let a = model.forward(&mel, Some(&random_accent(5))).unwrap();
        let b = model.forward(&mel, Some(&random_accent(6))).unwrap();
        assert_ne!(a.token_log_probs.data(), b.token_log_probs.data());
    }

    #[test]
    fn kind_mismatch_and_missing_embedding_rejected() {
        let model = toy_model(true);
        let mel = mel_of_frames(6000);
        let wrong = Embedding::zeros(EmbeddingKind::Gender);
        assert!(matches!(
            model.forward(&mel, Some(&wrong)),
            Err(ModelError::KindMismatch { .. })
        ));
        assert!(matches!(
            model.forward(&mel, None),
            Err(ModelError::MissingEmbedding)
        ));
    }

    #[test]
    fn ablation_variant_ignores_accent_entirely() {
        let model = toy_model(false);
        let mel = mel_of_frames(6000);
        let a = model.forward(&mel, Some(&random_accent(7))).unwrap();
        let b = model.forward(&mel, Some(&random_accent(8))).unwrap();
        let c = model.forward(&mel, None).unwrap();
        assert_eq!(a.token_log_probs.data(), b.token_log_probs.data());
        assert_eq!(a.token_log_probs.data(), c.token_log_probs.data());
    }
}
