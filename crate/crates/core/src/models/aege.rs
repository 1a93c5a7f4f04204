//! Accent/gender embedding model: a Jasper trunk feeding two parallel
//! attention-pooling decoders. Embeddings are the pre-logit activations.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId, Scalar, Tensor};
use crate::dsp::MelSpectrogram;
use crate::nn::{AttentionPoolingDecoder, Ctx, JasperStack, Module, Preset, VarKind};

use super::{Embedding, EmbeddingKind, ModelError};

pub struct AegeModel<T: Scalar> {
    jasper: JasperStack<T>,
    accent_decoder: AttentionPoolingDecoder<T>,
    gender_decoder: AttentionPoolingDecoder<T>,
    pub accent_classes: usize,
}

pub struct AegeOutput {
    pub accent_logits: Vec<f64>,
    pub gender_logits: Vec<f64>,
    pub accent_emb: Embedding,
    pub gender_emb: Embedding,
}

impl<T: Scalar> AegeModel<T> {
    pub fn new(name: &str, preset: &Preset, accent_classes: usize, rng: &mut ChaCha8Rng) -> Self {
        let jasper = JasperStack::new(
            &format!("{name}.jasper"),
            preset.n_mels,
            preset.jasper_channels,
            preset.jasper_kernel,
            preset.dropout,
            rng,
        );
        AegeModel {
            accent_decoder: AttentionPoolingDecoder::new(
                &format!("{name}.accent_decoder"),
                preset.jasper_channels,
                preset.attn_hidden,
                preset.embedding_dim,
                accent_classes,
                rng,
            ),
            gender_decoder: AttentionPoolingDecoder::new(
                &format!("{name}.gender_decoder"),
                preset.jasper_channels,
                preset.attn_hidden,
                preset.embedding_dim,
                2,
                rng,
            ),
            jasper,
            accent_classes,
        }
    }

    /// `mel` is `[n_mels, T]`; returns
    /// `(accent_logits, gender_logits, accent_emb, gender_emb)` nodes.
    pub fn forward_graph(
        &self,
        g: &mut Graph<T>,
        ctx: &mut Ctx<T>,
        mel: NodeId,
    ) -> Result<(NodeId, NodeId, NodeId, NodeId), ModelError> {
        if g.value(mel).shape()[1] == 0 {
            return Err(ModelError::EmptyMel);
        }
        let features = self.jasper.forward(g, ctx, mel);
        let (accent_emb, accent_logits) = self
            .accent_decoder
            .forward(g, ctx, features)
            .map_err(|_| ModelError::EmptyMel)?;
        let (gender_emb, gender_logits) = self
            .gender_decoder
            .forward(g, ctx, features)
            .map_err(|_| ModelError::EmptyMel)?;
        Ok((accent_logits, gender_logits, accent_emb, gender_emb))
    }

    /// Inference-mode pass over a mel spectrogram.
    pub fn forward(&self, mel: &MelSpectrogram) -> Result<AegeOutput, ModelError> {
        let mut g = Graph::new();
        let mut ctx = Ctx::infer();
        let mel_node = g.constant(mel.to_tensor::<T>());
        let (al, gl, ae, ge) = self.forward_graph(&mut g, &mut ctx, mel_node)?;
        Ok(AegeOutput {
            accent_logits: g.value(al).to_f64_vec(),
            gender_logits: g.value(gl).to_f64_vec(),
            accent_emb: Embedding::new(EmbeddingKind::Accent, g.value(ae).to_f64_vec()),
            gender_emb: Embedding::new(EmbeddingKind::Gender, g.value(ge).to_f64_vec()),
        })
    }
}

impl<T: Scalar> Module<T> for AegeModel<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        self.jasper.visit(f);
        self.accent_decoder.visit(f);
        self.gender_decoder.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        self.jasper.visit_mut(f);
        self.accent_decoder.visit_mut(f);
        self.gender_decoder.visit_mut(f);
    }
}
