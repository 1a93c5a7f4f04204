//! X-vector style stack: five dilated 1-D convolutions without padding,
//! statistics pooling over time, and a linear map to the speaker dimension.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ops, Graph, NodeId, Scalar, Tensor};

use super::common::{Conv1dLayer, Ctx, Linear, VarKind};
use super::{Module, NnError};

const KERNELS: [usize; 5] = [5, 3, 3, 1, 1];
const DILATIONS: [usize; 5] = [1, 2, 3, 1, 1];

pub struct XVectorStack<T: Scalar> {
    convs: Vec<Conv1dLayer<T>>,
    out: Linear<T>,
    channels: usize,
    pub speaker_dim: usize,
}

impl<T: Scalar> XVectorStack<T> {
    pub fn new(
        name: &str,
        in_channels: usize,
        channels: usize,
        speaker_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut convs = Vec::new();
        let mut c_in = in_channels;
        for (i, (&k, &d)) in KERNELS.iter().zip(DILATIONS.iter()).enumerate() {
            convs.push(Conv1dLayer::new(
                format!("{name}.tdnn{i}"),
                c_in,
                channels,
                k,
                1,
                d,
                0,
                1,
                rng,
            ));
            c_in = channels;
        }
        XVectorStack {
            convs,
            out: Linear::new(format!("{name}.out"), 2 * channels, speaker_dim, true, rng),
            channels,
            speaker_dim,
        }
    }

    /// Frames consumed by the dilated stack: inputs shorter than this
    /// produce no output frame.
    pub fn receptive_field(&self) -> usize {
        1 + KERNELS
            .iter()
            .zip(DILATIONS.iter())
            .map(|(&k, &d)| (k - 1) * d)
            .sum::<usize>()
    }

    /// `features` is `[C, T]`; returns the speaker embedding `[speaker_dim]`.
    pub fn forward(&self, g: &mut Graph<T>, ctx: &Ctx<T>, features: NodeId) -> Result<NodeId, NnError> {
        let shape = g.value(features).shape().to_vec();
        assert_eq!(shape.len(), 2, "xvector input must be [C, T]");
        let t_in = shape[1];
        let rf = self.receptive_field();
        if t_in < rf {
            return Err(NnError::BelowReceptiveField {
                frames: t_in,
                required: rf,
            });
        }
        let mut x = ops::reshape(g, features, vec![1, shape[0], t_in]);
        for conv in &self.convs {
            let y = conv.forward(g, ctx, x);
            x = ops::relu(g, y);
        }
        let t_out = g.value(x).shape()[2];
        let x = ops::reshape(g, x, vec![self.channels, t_out]);

        // statistics pooling: mean and std over time
        let mean = ops::mean_axis(g, x, 1, true); // [C, 1]
        let centered = ops::sub(g, x, mean);
        let sq = ops::mul(g, centered, centered);
        let var = ops::mean_axis(g, sq, 1, true);
        let var_eps = ops::affine(g, var, 1.0, 1e-9);
        let std = ops::sqrt(g, var_eps);
        let pooled = ops::concat(g, &[mean, std], 0); // [2C, 1]
        let pooled = ops::reshape(g, pooled, vec![1, 2 * self.channels]);
        let emb = self.out.forward(g, ctx, pooled);
        Ok(ops::reshape(g, emb, vec![self.speaker_dim]))
    }
}

impl<T: Scalar> Module<T> for XVectorStack<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        for c in &self.convs {
            c.visit(f);
        }
        self.out.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        for c in &mut self.convs {
            c.visit_mut(f);
        }
        self.out.visit_mut(f);
    }
}
