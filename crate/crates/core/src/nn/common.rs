//! Shared layer primitives: parameter registration, initialization, linear
//! layers, batch norm, dropout and multi-head self-attention.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ops, Graph, NodeId, Scalar, Tensor};

use super::Module;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Param,
    Buffer,
}

/// Forward-pass context.
///
/// `trainable` decides whether parameters enter the graph as differentiable
/// leaves or as constants (frozen models). `train` enables dropout and batch
/// statistics; running-stat updates are queued into `buffer_updates` and
/// applied by the trainer after the step, keeping forward passes `&self`.
pub struct Ctx<T: Scalar> {
    pub train: bool,
    pub trainable: bool,
    pub rng: Option<ChaCha8Rng>,
    pub buffer_updates: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Ctx<T> {
    pub fn infer() -> Self {
        Ctx {
            train: false,
            trainable: false,
            rng: None,
            buffer_updates: Vec::new(),
        }
    }

    pub fn train(rng: ChaCha8Rng) -> Self {
        Ctx {
            train: true,
            trainable: true,
            rng: Some(rng),
            buffer_updates: Vec::new(),
        }
    }

    /// Frozen model participating in someone else's training graph.
    pub fn frozen(&self) -> Ctx<T> {
        Ctx {
            train: false,
            trainable: false,
            rng: None,
            buffer_updates: Vec::new(),
        }
    }
}

/// Register a named tensor: differentiable leaf when trainable, constant
/// otherwise.
pub fn leaf<T: Scalar>(g: &mut Graph<T>, ctx: &Ctx<T>, name: &str, value: &Tensor<T>) -> NodeId {
    if ctx.trainable {
        g.param(name, value)
    } else {
        g.constant(value.clone())
    }
}

/// Inverted dropout; identity outside training mode or at rate 0.
pub fn dropout<T: Scalar>(g: &mut Graph<T>, ctx: &mut Ctx<T>, x: NodeId, rate: f64) -> NodeId {
    if !ctx.train || rate <= 0.0 {
        return x;
    }
    let rng = ctx.rng.as_mut().expect("training context requires an rng");
    let keep = 1.0 - rate;
    let shape = g.value(x).shape().to_vec();
    let n = g.value(x).numel();
    let mask: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(keep) { 1.0 / keep } else { 0.0 })
        .collect();
    let mask = g.constant(Tensor::from_f64s(&shape, &mask));
    ops::mul(g, x, mask)
}

/// Xavier-uniform initialization, drawn in f64 for cross-precision
/// determinism.
pub fn xavier_tensor<T: Scalar>(
    rng: &mut ChaCha8Rng,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> Tensor<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data: Vec<f64> = (0..shape.iter().product())
        .map(|_| rng.gen_range(-a..a))
        .collect();
    Tensor::from_f64s(shape, &data)
}

/// Sinusoidal absolute position encodings `[t_len, dim]`.
pub fn sinusoidal_positions<T: Scalar>(t_len: usize, dim: usize) -> Tensor<T> {
    let mut data = vec![0.0f64; t_len * dim];
    for t in 0..t_len {
        for i in 0..dim / 2 {
            let rate = 1.0 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            data[t * dim + 2 * i] = (t as f64 * rate).sin();
            data[t * dim + 2 * i + 1] = (t as f64 * rate).cos();
        }
    }
    Tensor::from_f64s(&[t_len, dim], &data)
}

/// Fully connected layer `[d_in] -> [d_out]` applied to `[T, d_in]` inputs.
pub struct Linear<T: Scalar> {
    pub name: String,
    pub w: Tensor<T>,
    pub b: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(name: String, d_in: usize, d_out: usize, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            w: xavier_tensor(rng, &[d_in, d_out], d_in, d_out),
            b: bias.then(|| Tensor::zeros(&[d_out])),
            name,
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, ctx: &Ctx<T>, x: NodeId) -> NodeId {
        let w = leaf(g, ctx, &format!("{}.w", self.name), &self.w);
        let y = ops::matmul(g, x, w);
        match &self.b {
            Some(b) => {
                let b = leaf(g, ctx, &format!("{}.b", self.name), b);
                ops::add(g, y, b)
            }
            None => y,
        }
    }

    /// Apply to a rank-1 vector, returning a rank-1 vector.
    pub fn forward_vec(&self, g: &mut Graph<T>, ctx: &Ctx<T>, x: NodeId) -> NodeId {
        let d_in = self.w.shape()[0];
        let d_out = self.w.shape()[1];
        let row = ops::reshape(g, x, vec![1, d_in]);
        let y = self.forward(g, ctx, row);
        ops::reshape(g, y, vec![d_out])
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        f(&format!("{}.w", self.name), &self.w, VarKind::Param);
        if let Some(b) = &self.b {
            f(&format!("{}.b", self.name), b, VarKind::Param);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        f(&format!("{}.w", self.name), &mut self.w, VarKind::Param);
        if let Some(b) = &mut self.b {
            f(&format!("{}.b", self.name), b, VarKind::Param);
        }
    }
}

/// 1-D convolution layer over `[B, C, T]` inputs.
pub struct Conv1dLayer<T: Scalar> {
    pub name: String,
    pub w: Tensor<T>, // [Cout, Cin/groups, K]
    pub b: Tensor<T>, // [Cout]
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
    pub groups: usize,
}

impl<T: Scalar> Conv1dLayer<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: String,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        padding: usize,
        groups: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let cin_g = c_in / groups;
        Conv1dLayer {
            w: xavier_tensor(rng, &[c_out, cin_g, kernel], cin_g * kernel, c_out * kernel / groups),
            b: Tensor::zeros(&[c_out]),
            stride,
            dilation,
            padding,
            groups,
            name,
        }
    }

    /// Same-length convolution (stride 1, odd kernel).
    pub fn same(name: String, c_in: usize, c_out: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(kernel % 2 == 1, "same-padding requires an odd kernel");
        Self::new(name, c_in, c_out, kernel, 1, 1, kernel / 2, 1, rng)
    }

    pub fn forward(&self, g: &mut Graph<T>, ctx: &Ctx<T>, x: NodeId) -> NodeId {
        let w = leaf(g, ctx, &format!("{}.w", self.name), &self.w);
        let b = leaf(g, ctx, &format!("{}.b", self.name), &self.b);
        ops::conv1d(g, x, w, Some(b), self.stride, self.dilation, self.padding, self.groups)
    }
}

impl<T: Scalar> Module<T> for Conv1dLayer<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        f(&format!("{}.w", self.name), &self.w, VarKind::Param);
        f(&format!("{}.b", self.name), &self.b, VarKind::Param);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        f(&format!("{}.w", self.name), &mut self.w, VarKind::Param);
        f(&format!("{}.b", self.name), &mut self.b, VarKind::Param);
    }
}

/// Transposed 1-D convolution layer over `[B, C, T]` inputs.
pub struct TransposedConv1dLayer<T: Scalar> {
    pub name: String,
    pub w: Tensor<T>, // [Cin, Cout, K]
    pub b: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Scalar> TransposedConv1dLayer<T> {
    pub fn new(
        name: String,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        TransposedConv1dLayer {
            w: xavier_tensor(rng, &[c_in, c_out, kernel], c_in * kernel, c_out * kernel),
            b: Tensor::zeros(&[c_out]),
            stride,
            padding,
            name,
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, ctx: &Ctx<T>, x: NodeId) -> NodeId {
        let w = leaf(g, ctx, &format!("{}.w", self.name), &self.w);
        let b = leaf(g, ctx, &format!("{}.b", self.name), &self.b);
        ops::transposed_conv1d(g, x, w, Some(b), self.stride, self.padding)
    }
}

impl<T: Scalar> Module<T> for TransposedConv1dLayer<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        f(&format!("{}.w", self.name), &self.w, VarKind::Param);
        f(&format!("{}.b", self.name), &self.b, VarKind::Param);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        f(&format!("{}.w", self.name), &mut self.w, VarKind::Param);
        f(&format!("{}.b", self.name), &mut self.b, VarKind::Param);
    }
}

/// Layer norm over the last axis with learnable gain/bias.
pub struct LayerNorm<T: Scalar> {
    pub name: String,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(name: String, dim: usize) -> Self {
        LayerNorm {
            gamma: Tensor::full(&[dim], T::one()),
            beta: Tensor::zeros(&[dim]),
            name,
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, ctx: &Ctx<T>, x: NodeId) -> NodeId {
        let gamma = leaf(g, ctx, &format!("{}.gamma", self.name), &self.gamma);
        let beta = leaf(g, ctx, &format!("{}.beta", self.name), &self.beta);
        ops::layer_norm(g, x, gamma, beta)
    }
}

impl<T: Scalar> Module<T> for LayerNorm<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        f(&format!("{}.gamma", self.name), &self.gamma, VarKind::Param);
        f(&format!("{}.beta", self.name), &self.beta, VarKind::Param);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        f(&format!("{}.gamma", self.name), &mut self.gamma, VarKind::Param);
        f(&format!("{}.beta", self.name), &mut self.beta, VarKind::Param);
    }
}

/// Batch norm over `[B, C, T]`. Training uses batch statistics and queues
/// running-stat updates; inference uses the frozen running statistics.
pub struct BatchNorm1d<T: Scalar> {
    pub name: String,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Scalar> BatchNorm1d<T> {
    pub fn new(name: String, channels: usize) -> Self {
        BatchNorm1d {
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            momentum: 0.1,
            eps: 1e-5,
            name,
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, ctx: &mut Ctx<T>, x: NodeId) -> NodeId {
        let c = self.gamma.numel();
        let gamma = leaf(g, ctx, &format!("{}.gamma", self.name), &self.gamma);
        let beta = leaf(g, ctx, &format!("{}.beta", self.name), &self.beta);
        let gamma = ops::reshape(g, gamma, vec![1, c, 1]);
        let beta = ops::reshape(g, beta, vec![1, c, 1]);

        let (mean, var) = if ctx.train {
            let m0 = ops::mean_axis(g, x, 2, true);
            let m = ops::mean_axis(g, m0, 0, true); // [1, C, 1]
            let centered = ops::sub(g, x, m);
            let sq = ops::mul(g, centered, centered);
            let v0 = ops::mean_axis(g, sq, 2, true);
            let v = ops::mean_axis(g, v0, 0, true);
            // queue running-stat updates from the eager values
            let bm = g.value(m).clone().reshaped(vec![c]);
            let bv = g.value(v).clone().reshaped(vec![c]);
            let mom = self.momentum;
            let mix = |run: &Tensor<T>, batch: &Tensor<T>| {
                let mut out = run.clone();
                for (o, (&r, &b)) in out
                    .data_mut()
                    .iter_mut()
                    .zip(run.data().iter().zip(batch.data()))
                {
                    *o = T::from_f64((1.0 - mom) * r.into_f64() + mom * b.into_f64());
                }
                out
            };
            ctx.buffer_updates
                .push((format!("{}.running_mean", self.name), mix(&self.running_mean, &bm)));
            ctx.buffer_updates
                .push((format!("{}.running_var", self.name), mix(&self.running_var, &bv)));
            (m, v)
        } else {
            let m = g.constant(self.running_mean.clone().reshaped(vec![1, c, 1]));
            let v = g.constant(self.running_var.clone().reshaped(vec![1, c, 1]));
            (m, v)
        };

        let centered = ops::sub(g, x, mean);
        let veps = ops::affine(g, var, 1.0, self.eps);
        let denom = ops::sqrt(g, veps);
        let xhat = ops::div(g, centered, denom);
        let scaled = ops::mul(g, xhat, gamma);
        ops::add(g, scaled, beta)
    }
}

impl<T: Scalar> Module<T> for BatchNorm1d<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        f(&format!("{}.gamma", self.name), &self.gamma, VarKind::Param);
        f(&format!("{}.beta", self.name), &self.beta, VarKind::Param);
        f(&format!("{}.running_mean", self.name), &self.running_mean, VarKind::Buffer);
        f(&format!("{}.running_var", self.name), &self.running_var, VarKind::Buffer);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        f(&format!("{}.gamma", self.name), &mut self.gamma, VarKind::Param);
        f(&format!("{}.beta", self.name), &mut self.beta, VarKind::Param);
        f(&format!("{}.running_mean", self.name), &mut self.running_mean, VarKind::Buffer);
        f(&format!("{}.running_var", self.name), &mut self.running_var, VarKind::Buffer);
    }
}

/// Multi-head self-attention with absolute sinusoidal positions added to
/// the sublayer input.
pub struct MultiHeadAttention<T: Scalar> {
    pub name: String,
    pub heads: usize,
    pub wq: Linear<T>,
    pub wk: Linear<T>,
    pub wv: Linear<T>,
    pub wo: Linear<T>,
}

impl<T: Scalar> MultiHeadAttention<T> {
    pub fn new(name: String, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        assert_eq!(dim % heads, 0, "model dim must divide head count");
        MultiHeadAttention {
            wq: Linear::new(format!("{name}.wq"), dim, dim, true, rng),
            wk: Linear::new(format!("{name}.wk"), dim, dim, true, rng),
            wv: Linear::new(format!("{name}.wv"), dim, dim, true, rng),
            wo: Linear::new(format!("{name}.wo"), dim, dim, true, rng),
            heads,
            name,
        }
    }

    /// `x` is `[T, d]`; `mask` an optional additive `[T, T]` bias.
    pub fn forward(&self, g: &mut Graph<T>, ctx: &Ctx<T>, x: NodeId, mask: Option<NodeId>) -> NodeId {
        let t_len = g.value(x).shape()[0];
        let dim = g.value(x).shape()[1];
        let dh = dim / self.heads;
        let pe = g.constant(sinusoidal_positions(t_len, dim));
        let x = ops::add(g, x, pe);

        let split = |g: &mut Graph<T>, n: NodeId| {
            let r = ops::reshape(g, n, vec![t_len, self.heads, dh]);
            ops::transpose(g, r, 0, 1) // [h, T, dh]
        };
        let q = self.wq.forward(g, ctx, x);
        let k = self.wk.forward(g, ctx, x);
        let v = self.wv.forward(g, ctx, x);
        let (q, k, v) = (split(g, q), split(g, k), split(g, v));
        let attn = ops::scaled_dot_attention(g, q, k, v, mask);
        let merged = ops::transpose(g, attn, 0, 1); // [T, h, dh]
        let merged = ops::reshape(g, merged, vec![t_len, dim]);
        self.wo.forward(g, ctx, merged)
    }
}

impl<T: Scalar> Module<T> for MultiHeadAttention<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        self.wq.visit(f);
        self.wk.visit(f);
        self.wv.visit(f);
        self.wo.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        self.wq.visit_mut(f);
        self.wk.visit_mut(f);
        self.wv.visit_mut(f);
        self.wo.visit_mut(f);
    }
}

/// Swish activation `x * sigmoid(x)`.
pub fn swish<T: Scalar>(g: &mut Graph<T>, x: NodeId) -> NodeId {
    let s = ops::sigmoid(g, x);
    ops::mul(g, x, s)
}
