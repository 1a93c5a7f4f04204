//! Spectrogram-generation model. Phonetic frames are upsampled 4x and
//! encoded; an accent branch conditions pronunciation while a speaker
//! branch aggregates pitch, timbre and gender; their sum is decoded to
//! 80 mel bands.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ops, Graph, NodeId, Scalar, Tensor};
use crate::dsp::PitchContour;
use crate::nn::{Condition, Ctx, FftChain, Linear, Module, Preset, Upsample4, VarKind};

use super::{Embedding, EmbeddingKind, ModelError, PhoneticFeatures};

/// F0 is scaled by this constant before projection.
pub const F0_NORM_HZ: f64 = 400.0;

pub struct StsModel<T: Scalar> {
    upsample: Upsample4<T>,
    stp_encoder: FftChain<T>,
    /// Accent-branch conditioning; absent in ablation mode.
    accent_condition: Option<Condition<T>>,
    accent_encoder: FftChain<T>,
    pitch_proj: Linear<T>,
    speaker_condition: Condition<T>,
    /// Gender conditioning; absent in ablation mode.
    gender_condition: Option<Condition<T>>,
    speaker_encoder: FftChain<T>,
    decoder: FftChain<T>,
    mel_proj: Linear<T>,
    pub n_mels: usize,
}

impl<T: Scalar> StsModel<T> {
    pub fn new(name: &str, preset: &Preset, conditioned: bool, rng: &mut ChaCha8Rng) -> Self {
        let d = preset.sts_dim;
        let upsample = Upsample4::new(&format!("{name}.upsample"), preset.phonetic_dim, d, rng);
        let stp_encoder = FftChain::new(
            &format!("{name}.stp_encoder"),
            preset.sts_encoder_stacks,
            d,
            preset.sts_inner,
            preset.sts_heads,
            preset.fft_kernel,
            preset.dropout,
            rng,
        );
        let accent_condition = conditioned.then(|| {
            Condition::new(&format!("{name}.accent_condition"), preset.embedding_dim, d, rng)
        });
        let accent_encoder = FftChain::new(
            &format!("{name}.accent_encoder"),
            1,
            d,
            preset.sts_inner,
            preset.sts_heads,
            preset.fft_kernel,
            preset.dropout,
            rng,
        );
        let pitch_proj = Linear::new(format!("{name}.pitch_proj"), 2, d, true, rng);
        let speaker_condition =
            Condition::new(&format!("{name}.speaker_condition"), preset.speaker_dim, d, rng);
        let gender_condition = conditioned.then(|| {
            Condition::new(&format!("{name}.gender_condition"), preset.embedding_dim, d, rng)
        });
        let speaker_encoder = FftChain::new(
            &format!("{name}.speaker_encoder"),
            1,
            d,
            preset.sts_inner,
            preset.sts_heads,
            preset.fft_kernel,
            preset.dropout,
            rng,
        );
        let decoder = FftChain::new(
            &format!("{name}.decoder"),
            preset.sts_decoder_stacks,
            d,
            preset.sts_inner,
            preset.sts_heads,
            preset.fft_kernel,
            preset.dropout,
            rng,
        );
        let mel_proj = Linear::new(format!("{name}.mel_proj"), d, preset.n_mels, true, rng);
        StsModel {
            upsample,
            stp_encoder,
            accent_condition,
            accent_encoder,
            pitch_proj,
            speaker_condition,
            gender_condition,
            speaker_encoder,
            decoder,
            mel_proj,
            n_mels: preset.n_mels,
        }
    }

    pub fn is_conditioned(&self) -> bool {
        self.accent_condition.is_some()
    }

    /// Per-frame pitch features `[frames, 2]`: scaled f0 and voicing flag.
    fn pitch_features(pitch: &PitchContour) -> Tensor<T> {
        let n = pitch.len();
        let mut data = vec![0.0f64; n * 2];
        for t in 0..n {
            data[t * 2] = pitch.f0[t] / F0_NORM_HZ;
            data[t * 2 + 1] = if pitch.voiced[t] { 1.0 } else { 0.0 };
        }
        Tensor::from_f64s(&[n, 2], &data)
    }

    /// `ph_frames` is `[T', pdim]`; the pitch contour must cover exactly
    /// `4 T'` frames. Returns the predicted mel `[n_mels, 4 T']`.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_graph(
        &self,
        g: &mut Graph<T>,
        ctx: &mut Ctx<T>,
        ph_frames: NodeId,
        accent_emb: Option<NodeId>,
        gender_emb: Option<NodeId>,
        speaker_emb: NodeId,
        pitch: &PitchContour,
    ) -> Result<NodeId, ModelError> {
        let t_in = g.value(ph_frames).shape()[0];
        let out_frames = 4 * t_in;
        if pitch.len() != out_frames {
            return Err(ModelError::GridMismatch {
                expected: out_frames,
                got: pitch.len(),
            });
        }

        let h = ops::transpose(g, ph_frames, 0, 1); // [pdim, T']
        let h = self.upsample.forward(g, ctx, h); // [d, 4T']
        let h = ops::transpose(g, h, 0, 1); // [4T', d]
        let encoded = self.stp_encoder.forward(g, ctx, h);

        // branch A: accent-conditioned pronunciation
        let mut a = encoded;
        if let Some(cond) = &self.accent_condition {
            let emb = accent_emb.ok_or(ModelError::MissingEmbedding)?;
            a = cond.forward(g, ctx, a, emb);
        }
        let a = self.accent_encoder.forward(g, ctx, a);

        // branch B: voice characteristics unrelated to accent
        let pitch_feats = g.constant(Self::pitch_features(pitch));
        let mut b = self.pitch_proj.forward(g, ctx, pitch_feats); // [4T', d]
        b = self.speaker_condition.forward(g, ctx, b, speaker_emb);
        if let Some(cond) = &self.gender_condition {
            let emb = gender_emb.ok_or(ModelError::MissingEmbedding)?;
            b = cond.forward(g, ctx, b, emb);
        }
        let b = self.speaker_encoder.forward(g, ctx, b);

        let summed = ops::add(g, a, b);
        let decoded = self.decoder.forward(g, ctx, summed);
        let mel = self.mel_proj.forward(g, ctx, decoded); // [4T', n_mels]
        Ok(ops::transpose(g, mel, 0, 1))
    }

    /// Inference-mode pass; validates embedding kinds.
    pub fn forward(
        &self,
        ph: &PhoneticFeatures<T>,
        accent_emb: Option<&Embedding>,
        gender_emb: Option<&Embedding>,
        speaker_emb: &Embedding,
        pitch: &PitchContour,
    ) -> Result<Tensor<T>, ModelError> {
        let check = |emb: Option<&Embedding>, expected: EmbeddingKind| -> Result<(), ModelError> {
            if let Some(e) = emb {
                if e.kind != expected {
                    return Err(ModelError::KindMismatch {
                        expected,
                        got: e.kind,
                    });
                }
            }
            Ok(())
        };
        if speaker_emb.kind != EmbeddingKind::Speaker {
            return Err(ModelError::KindMismatch {
                expected: EmbeddingKind::Speaker,
                got: speaker_emb.kind,
            });
        }
        let (accent_in, gender_in) = if self.is_conditioned() {
            check(accent_emb, EmbeddingKind::Accent)?;
            check(gender_emb, EmbeddingKind::Gender)?;
            (
                Some(accent_emb.ok_or(ModelError::MissingEmbedding)?.to_tensor::<T>()),
                Some(gender_emb.ok_or(ModelError::MissingEmbedding)?.to_tensor::<T>()),
            )
        } else {
            (None, None)
        };

        let mut g = Graph::new();
        let mut ctx = Ctx::infer();
        let frames = g.constant(ph.frames.clone());
        let accent = accent_in.map(|t| g.constant(t));
        let gender = gender_in.map(|t| g.constant(t));
        let speaker = g.constant(speaker_emb.to_tensor::<T>());
        let mel = self.forward_graph(&mut g, &mut ctx, frames, accent, gender, speaker, pitch)?;
        Ok(g.value(mel).clone())
    }
}

impl<T: Scalar> Module<T> for StsModel<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        self.upsample.visit(f);
        self.stp_encoder.visit(f);
        if let Some(c) = &self.accent_condition {
            c.visit(f);
        }
        self.accent_encoder.visit(f);
        self.pitch_proj.visit(f);
        self.speaker_condition.visit(f);
        if let Some(c) = &self.gender_condition {
            c.visit(f);
        }
        self.speaker_encoder.visit(f);
        self.decoder.visit(f);
        self.mel_proj.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        self.upsample.visit_mut(f);
        self.stp_encoder.visit_mut(f);
        if let Some(c) = &mut self.accent_condition {
            c.visit_mut(f);
        }
        self.accent_encoder.visit_mut(f);
        self.pitch_proj.visit_mut(f);
        self.speaker_condition.visit_mut(f);
        if let Some(c) = &mut self.gender_condition {
            c.visit_mut(f);
        }
        self.speaker_encoder.visit_mut(f);
        self.decoder.visit_mut(f);
        self.mel_proj.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn toy_model(conditioned: bool) -> StsModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        StsModel::new("sts", &Preset::toy(), conditioned, &mut rng)
    }

    fn random_phonetic(t: usize, seed: u64) -> PhoneticFeatures<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = Tensor::from_f64s(
            &[t, 64],
            &(0..t * 64).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>(),
        );
        let lp = Tensor::full(&[t, 129], (1.0 / 129.0f64).ln());
        PhoneticFeatures {
            frames,
            token_log_probs: lp,
        }
    }

    fn flat_pitch(n: usize) -> PitchContour {
        PitchContour {
            f0: vec![150.0; n],
            voiced: vec![true; n],
        }
    }

    fn embeddings(seed: u64) -> (Embedding, Embedding, Embedding) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut make = |kind: EmbeddingKind| {
            Embedding::new(
                kind,
                (0..kind.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
        };
        (
            make(EmbeddingKind::Accent),
            make(EmbeddingKind::Gender),
            make(EmbeddingKind::Speaker),
        )
    }

    #[test]
    fn twenty_five_steps_give_100_frames_of_80_bands() {
        let model = toy_model(true);
        let ph = random_phonetic(25, 10);
        let (a, ge, s) = embeddings(11);
        let mel = model
            .forward(&ph, Some(&a), Some(&ge), &s, &flat_pitch(100))
            .unwrap();
        assert_eq!(mel.shape(), &[80, 100]);
    }

    #[test]
    fn zero_conditioning_inputs_still_finite() {
        let model = toy_model(true);
        let ph = random_phonetic(6, 12);
        let a = Embedding::zeros(EmbeddingKind::Accent);
        let ge = Embedding::zeros(EmbeddingKind::Gender);
        let s = Embedding::zeros(EmbeddingKind::Speaker);
        let silent = PitchContour {
            f0: vec![0.0; 24],
            voiced: vec![false; 24],
        };
        let mel = model.forward(&ph, Some(&a), Some(&ge), &s, &silent).unwrap();
        assert!(mel.all_finite());
    }

    #[test]
    fn speaker_perturbation_changes_values_not_shape() {
        let model = toy_model(true);
        let ph = random_phonetic(8, 13);
        let (a, ge, s) = embeddings(14);
        let mut s2 = s.clone();
        s2.values[0] += 0.5;
        let m1 = model
            .forward(&ph, Some(&a), Some(&ge), &s, &flat_pitch(32))
            .unwrap();
        let m2 = model
            .forward(&ph, Some(&a), Some(&ge), &s2, &flat_pitch(32))
            .unwrap();
        assert_eq!(m1.shape(), m2.shape());
        assert_ne!(m1.data(), m2.data());
    }

    #[test]
    fn grid_mismatch_rejected() {
        let model = toy_model(true);
        let ph = random_phonetic(8, 15);
        let (a, ge, s) = embeddings(16);
        assert!(matches!(
            model.forward(&ph, Some(&a), Some(&ge), &s, &flat_pitch(31)),
            Err(ModelError::GridMismatch { expected: 32, got: 31 })
        ));
    }

    #[test]
    fn ablation_variant_ignores_accent_and_gender() {
        let model = toy_model(false);
        let ph = random_phonetic(5, 17);
        let (a1, g1, s) = embeddings(18);
        let (a2, g2, _) = embeddings(19);
        let m1 = model
            .forward(&ph, Some(&a1), Some(&g1), &s, &flat_pitch(20))
            .unwrap();
        let m2 = model
            .forward(&ph, Some(&a2), Some(&g2), &s, &flat_pitch(20))
            .unwrap();
        let m3 = model.forward(&ph, None, None, &s, &flat_pitch(20)).unwrap();
        assert_eq!(m1.data(), m2.data());
        assert_eq!(m1.data(), m3.data());
    }
}
