//! Feed-forward Transformer stacks: self-attention plus a two-layer 1-D
//! convolutional feed-forward (kernel 3), post-norm residuals.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ops, Graph, NodeId, Scalar, Tensor};

use super::common::{dropout, Conv1dLayer, Ctx, LayerNorm, MultiHeadAttention, VarKind};
use super::Module;

pub struct FftStack<T: Scalar> {
    attn: MultiHeadAttention<T>,
    attn_norm: LayerNorm<T>,
    conv1: Conv1dLayer<T>,
    conv2: Conv1dLayer<T>,
    ff_norm: LayerNorm<T>,
    dropout_rate: f64,
    pub d_model: usize,
}

impl<T: Scalar> FftStack<T> {
    pub fn new(
        name: &str,
        d_model: usize,
        d_inner: usize,
        heads: usize,
        kernel: usize,
        dropout_rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        FftStack {
            attn: MultiHeadAttention::new(format!("{name}.attn"), d_model, heads, rng),
            attn_norm: LayerNorm::new(format!("{name}.attn_norm"), d_model),
            conv1: Conv1dLayer::same(format!("{name}.conv1"), d_model, d_inner, kernel, rng),
            conv2: Conv1dLayer::same(format!("{name}.conv2"), d_inner, d_model, kernel, rng),
            ff_norm: LayerNorm::new(format!("{name}.ff_norm"), d_model),
            dropout_rate,
            d_model,
        }
    }

    /// `x` is `[T, d_model]`; time length preserved.
    pub fn forward(&self, g: &mut Graph<T>, ctx: &mut Ctx<T>, x: NodeId) -> NodeId {
        let rate = self.dropout_rate;
        let a = self.attn.forward(g, ctx, x, None);
        let a = dropout(g, ctx, a, rate);
        let x = ops::add(g, x, a);
        let x = self.attn_norm.forward(g, ctx, x);

        let t_len = g.value(x).shape()[0];
        let h = ops::transpose(g, x, 0, 1); // [d, T]
        let h = ops::reshape(g, h, vec![1, self.d_model, t_len]);
        let h = self.conv1.forward(g, ctx, h);
        let h = ops::relu(g, h);
        let h = self.conv2.forward(g, ctx, h);
        let d = g.value(h).shape()[1];
        let h = ops::reshape(g, h, vec![d, t_len]);
        let h = ops::transpose(g, h, 0, 1);
        let h = dropout(g, ctx, h, rate);
        let x = ops::add(g, x, h);
        self.ff_norm.forward(g, ctx, x)
    }
}

impl<T: Scalar> Module<T> for FftStack<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        self.attn.visit(f);
        self.attn_norm.visit(f);
        self.conv1.visit(f);
        self.conv2.visit(f);
        self.ff_norm.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        self.attn.visit_mut(f);
        self.attn_norm.visit_mut(f);
        self.conv1.visit_mut(f);
        self.conv2.visit_mut(f);
        self.ff_norm.visit_mut(f);
    }
}

/// A sequence of FFT stacks; zero stacks is the identity.
pub struct FftChain<T: Scalar> {
    pub stacks: Vec<FftStack<T>>,
}

impl<T: Scalar> FftChain<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        n_stacks: usize,
        d_model: usize,
        d_inner: usize,
        heads: usize,
        kernel: usize,
        dropout_rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        FftChain {
            stacks: (0..n_stacks)
                .map(|i| {
                    FftStack::new(
                        &format!("{name}.{i}"),
                        d_model,
                        d_inner,
                        heads,
                        kernel,
                        dropout_rate,
                        rng,
                    )
                })
                .collect(),
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, ctx: &mut Ctx<T>, mut x: NodeId) -> NodeId {
        for stack in &self.stacks {
            x = stack.forward(g, ctx, x);
        }
        x
    }
}

impl<T: Scalar> Module<T> for FftChain<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        for s in &self.stacks {
            s.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        for s in &mut self.stacks {
            s.visit_mut(f);
        }
    }
}
