//! Speaker embedding model: Sinc band-pass front end over raw 16 kHz
//! waveform into an x-vector stack. No mel conversion on this path; input
//! at other rates is resampled internally.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId, Scalar, Tensor};
use crate::dsp::{resample, AudioBuffer};
use crate::nn::{Ctx, Module, Preset, SincConv, VarKind, XVectorStack};

use super::{Embedding, EmbeddingKind, ModelError};

pub const SE_SAMPLE_RATE: u32 = 16_000;

pub struct SeModel<T: Scalar> {
    sinc: SincConv<T>,
    xvector: XVectorStack<T>,
}

impl<T: Scalar> SeModel<T> {
    pub fn new(name: &str, preset: &Preset, rng: &mut ChaCha8Rng) -> Self {
        let sinc = SincConv::new(
            &format!("{name}.sinc"),
            preset.sinc_channels,
            preset.sinc_kernel,
            preset.sinc_stride,
            rng,
        );
        let xvector = XVectorStack::new(
            &format!("{name}.xvector"),
            preset.sinc_channels,
            preset.xvec_channels,
            preset.speaker_dim,
            rng,
        );
        SeModel { sinc, xvector }
    }

    /// Fewest 16 kHz samples that still produce one x-vector frame.
    pub fn min_samples(&self) -> usize {
        self.sinc.kernel + self.sinc.stride * (self.xvector.receptive_field() - 1)
    }

    /// `audio16k` is a `[n]` sample node at 16 kHz.
    pub fn forward_graph(
        &self,
        g: &mut Graph<T>,
        ctx: &Ctx<T>,
        audio16k: NodeId,
    ) -> Result<NodeId, ModelError> {
        let n = g.value(audio16k).numel();
        if n < self.min_samples() {
            return Err(ModelError::AudioTooShort {
                samples: n,
                required: self.min_samples(),
            });
        }
        let features = self
            .sinc
            .forward(g, ctx, audio16k)
            .expect("length checked above");
        let emb = self
            .xvector
            .forward(g, ctx, features)
            .expect("length checked above");
        Ok(emb)
    }

    /// Inference-mode speaker embedding; resamples to 16 kHz internally.
    pub fn forward(&self, audio: &AudioBuffer) -> Result<Embedding, ModelError> {
        let at16k = if audio.sample_rate == SE_SAMPLE_RATE {
            audio.clone()
        } else {
            resample(audio, SE_SAMPLE_RATE)?
        };
        if at16k.len() < self.min_samples() {
            return Err(ModelError::AudioTooShort {
                samples: at16k.len(),
                required: self.min_samples(),
            });
        }
        let mut g = Graph::new();
        let ctx = Ctx::infer();
        let x = g.constant(Tensor::from_f64s(&[at16k.len()], &at16k.samples));
        let emb = self.forward_graph(&mut g, &ctx, x)?;
        Ok(Embedding::new(EmbeddingKind::Speaker, g.value(emb).to_f64_vec()))
    }
}

impl<T: Scalar> Module<T> for SeModel<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        self.sinc.visit(f);
        self.xvector.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        self.sinc.visit_mut(f);
        self.xvector.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn toy_model() -> SeModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        SeModel::new("se", &Preset::toy(), &mut rng)
    }

    #[test]
    fn one_second_gives_512_dim_finite_vector() {
        let model = toy_model();
        let audio = AudioBuffer::sine(200.0, 1.0, 0.5, 22050);
        let emb = model.forward(&audio).unwrap();
        assert_eq!(emb.kind, EmbeddingKind::Speaker);
        assert_eq!(emb.values.len(), 512);
        assert!(emb.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn identical_audio_identical_embedding() {
        let model = toy_model();
        let audio = AudioBuffer::sine(180.0, 0.5, 0.4, 22050);
        let a = model.forward(&audio).unwrap();
        let b = model.forward(&audio).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn short_audio_rejected() {
        let model = toy_model();
        let required = model.min_samples();
        let audio = AudioBuffer::new(vec![0.1; required - 1], 16000);
        assert!(matches!(
            model.forward(&audio),
            Err(ModelError::AudioTooShort { .. })
        ));
    }
}
