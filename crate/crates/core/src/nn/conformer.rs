//! Conformer block: half-step feed-forward, multi-head self-attention,
//! depthwise convolution module, second half-step feed-forward, final
//! layer norm, residuals throughout. Positions are absolute sinusoidal.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ops, Graph, NodeId, Scalar, Tensor};

use super::common::{dropout, swish, Conv1dLayer, Ctx, LayerNorm, Linear, MultiHeadAttention, VarKind};
use super::Module;

struct FeedForward<T: Scalar> {
    norm: LayerNorm<T>,
    lin1: Linear<T>,
    lin2: Linear<T>,
}

impl<T: Scalar> FeedForward<T> {
    fn new(name: &str, dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        FeedForward {
            norm: LayerNorm::new(format!("{name}.norm"), dim),
            lin1: Linear::new(format!("{name}.lin1"), dim, hidden, true, rng),
            lin2: Linear::new(format!("{name}.lin2"), hidden, dim, true, rng),
        }
    }

    fn forward(&self, g: &mut Graph<T>, ctx: &mut Ctx<T>, x: NodeId, rate: f64) -> NodeId {
        let h = self.norm.forward(g, ctx, x);
        let h = self.lin1.forward(g, ctx, h);
        let h = swish(g, h);
        let h = dropout(g, ctx, h, rate);
        let h = self.lin2.forward(g, ctx, h);
        dropout(g, ctx, h, rate)
    }
}

struct ConvModule<T: Scalar> {
    norm: LayerNorm<T>,
    pointwise_in: Conv1dLayer<T>,  // d -> 2d, GLU halves it back
    depthwise: Conv1dLayer<T>,     // groups = d
    pointwise_out: Conv1dLayer<T>, // d -> d
}

impl<T: Scalar> ConvModule<T> {
    fn new(name: &str, dim: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        ConvModule {
            norm: LayerNorm::new(format!("{name}.norm"), dim),
            pointwise_in: Conv1dLayer::new(format!("{name}.pw_in"), dim, 2 * dim, 1, 1, 1, 0, 1, rng),
            depthwise: Conv1dLayer::new(
                format!("{name}.dw"),
                dim,
                dim,
                kernel,
                1,
                1,
                kernel / 2,
                dim,
                rng,
            ),
            pointwise_out: Conv1dLayer::new(format!("{name}.pw_out"), dim, dim, 1, 1, 1, 0, 1, rng),
        }
    }

    fn forward(&self, g: &mut Graph<T>, ctx: &mut Ctx<T>, x: NodeId, rate: f64) -> NodeId {
        let (t_len, dim) = {
            let s = g.value(x).shape();
            (s[0], s[1])
        };
        let h = self.norm.forward(g, ctx, x);
        let h = ops::transpose(g, h, 0, 1); // [d, T]
        let h = ops::reshape(g, h, vec![1, dim, t_len]);
        let h = self.pointwise_in.forward(g, ctx, h); // [1, 2d, T]
        // GLU: first half gated by sigmoid of second half
        let a = ops::slice(g, h, 1, 0, dim);
        let b = ops::slice(g, h, 1, dim, 2 * dim);
        let gate = ops::sigmoid(g, b);
        let h = ops::mul(g, a, gate);
        let h = self.depthwise.forward(g, ctx, h);
        let h = swish(g, h);
        let h = self.pointwise_out.forward(g, ctx, h);
        let h = ops::reshape(g, h, vec![dim, t_len]);
        let h = ops::transpose(g, h, 0, 1);
        dropout(g, ctx, h, rate)
    }
}

pub struct ConformerBlock<T: Scalar> {
    ffn1: FeedForward<T>,
    attn_norm: LayerNorm<T>,
    attn: MultiHeadAttention<T>,
    conv: ConvModule<T>,
    ffn2: FeedForward<T>,
    out_norm: LayerNorm<T>,
    dropout_rate: f64,
    pub dim: usize,
}

impl<T: Scalar> ConformerBlock<T> {
    pub fn new(
        name: &str,
        dim: usize,
        heads: usize,
        ff_mult: usize,
        conv_kernel: usize,
        dropout_rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        ConformerBlock {
            ffn1: FeedForward::new(&format!("{name}.ffn1"), dim, dim * ff_mult, rng),
            attn_norm: LayerNorm::new(format!("{name}.attn_norm"), dim),
            attn: MultiHeadAttention::new(format!("{name}.attn"), dim, heads, rng),
            conv: ConvModule::new(&format!("{name}.conv"), dim, conv_kernel, rng),
            ffn2: FeedForward::new(&format!("{name}.ffn2"), dim, dim * ff_mult, rng),
            out_norm: LayerNorm::new(format!("{name}.out_norm"), dim),
            dropout_rate,
            dim,
        }
    }

    /// `x` is `[T, d]`; time length is preserved.
    pub fn forward(&self, g: &mut Graph<T>, ctx: &mut Ctx<T>, x: NodeId, mask: Option<NodeId>) -> NodeId {
        let rate = self.dropout_rate;
        let f1 = self.ffn1.forward(g, ctx, x, rate);
        let f1 = ops::scale(g, f1, 0.5);
        let x = ops::add(g, x, f1);

        let a = self.attn_norm.forward(g, ctx, x);
        let a = self.attn.forward(g, ctx, a, mask);
        let a = dropout(g, ctx, a, rate);
        let x = ops::add(g, x, a);

        let c = self.conv.forward(g, ctx, x, rate);
        let x = ops::add(g, x, c);

        let f2 = self.ffn2.forward(g, ctx, x, rate);
        let f2 = ops::scale(g, f2, 0.5);
        let x = ops::add(g, x, f2);

        self.out_norm.forward(g, ctx, x)
    }
}

impl<T: Scalar> Module<T> for ConformerBlock<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        self.ffn1.norm.visit(f);
        self.ffn1.lin1.visit(f);
        self.ffn1.lin2.visit(f);
        self.attn_norm.visit(f);
        self.attn.visit(f);
        self.conv.norm.visit(f);
        self.conv.pointwise_in.visit(f);
        self.conv.depthwise.visit(f);
        self.conv.pointwise_out.visit(f);
        self.ffn2.norm.visit(f);
        self.ffn2.lin1.visit(f);
        self.ffn2.lin2.visit(f);
        self.out_norm.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        self.ffn1.norm.visit_mut(f);
        self.ffn1.lin1.visit_mut(f);
        self.ffn1.lin2.visit_mut(f);
        self.attn_norm.visit_mut(f);
        self.attn.visit_mut(f);
        self.conv.norm.visit_mut(f);
        self.conv.pointwise_in.visit_mut(f);
        self.conv.depthwise.visit_mut(f);
        self.conv.pointwise_out.visit_mut(f);
        self.ffn2.norm.visit_mut(f);
        self.ffn2.lin1.visit_mut(f);
        self.ffn2.lin2.visit_mut(f);
        self.out_norm.visit_mut(f);
    }
}
