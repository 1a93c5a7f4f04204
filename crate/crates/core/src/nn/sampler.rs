//! Time-axis sub/upsampling by a factor of 4.
//!
//! Subsampling: two stride-2 convolutions (k=3, p=1), `T -> ceil(T/4)`.
//! Upsampling: two stride-2 transposed convolutions (k=4, p=1) with ReLU
//! after each, an exact `T -> 4T` expansion.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ops, Graph, NodeId, Scalar, Tensor};

use super::common::{Conv1dLayer, Ctx, TransposedConv1dLayer, VarKind};
use super::Module;

pub struct Subsample4<T: Scalar> {
    conv1: Conv1dLayer<T>,
    conv2: Conv1dLayer<T>,
    pub out_channels: usize,
}

impl<T: Scalar> Subsample4<T> {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, rng: &mut ChaCha8Rng) -> Self {
        Subsample4 {
            conv1: Conv1dLayer::new(format!("{name}.conv1"), in_channels, out_channels, 3, 2, 1, 1, 1, rng),
            conv2: Conv1dLayer::new(format!("{name}.conv2"), out_channels, out_channels, 3, 2, 1, 1, 1, rng),
            out_channels,
        }
    }

    pub fn out_frames(t_in: usize) -> usize {
        t_in.div_ceil(4)
    }

    /// `x` is `[C, T]`; returns `[C_out, ceil(T/4)]`.
    pub fn forward(&self, g: &mut Graph<T>, ctx: &Ctx<T>, x: NodeId) -> NodeId {
        let shape = g.value(x).shape().to_vec();
        assert_eq!(shape.len(), 2, "subsample input must be [C, T]");
        let h = ops::reshape(g, x, vec![1, shape[0], shape[1]]);
        let h = self.conv1.forward(g, ctx, h);
        let h = ops::relu(g, h);
        let h = self.conv2.forward(g, ctx, h);
        let h = ops::relu(g, h);
        let t_out = g.value(h).shape()[2];
        debug_assert_eq!(t_out, Self::out_frames(shape[1]));
        ops::reshape(g, h, vec![self.out_channels, t_out])
    }
}

impl<T: Scalar> Module<T> for Subsample4<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        self.conv1.visit(f);
        self.conv2.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        self.conv1.visit_mut(f);
        self.conv2.visit_mut(f);
    }
}

pub struct Upsample4<T: Scalar> {
    tconv1: TransposedConv1dLayer<T>,
    tconv2: TransposedConv1dLayer<T>,
    pub out_channels: usize,
}

impl<T: Scalar> Upsample4<T> {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, rng: &mut ChaCha8Rng) -> Self {
        Upsample4 {
            tconv1: TransposedConv1dLayer::new(format!("{name}.tconv1"), in_channels, out_channels, 4, 2, 1, rng),
            tconv2: TransposedConv1dLayer::new(format!("{name}.tconv2"), out_channels, out_channels, 4, 2, 1, rng),
            out_channels,
        }
    }

    /// `x` is `[C, T]`; returns `[C_out, 4T]`.
    pub fn forward(&self, g: &mut Graph<T>, ctx: &Ctx<T>, x: NodeId) -> NodeId {
        let shape = g.value(x).shape().to_vec();
        assert_eq!(shape.len(), 2, "upsample input must be [C, T]");
        let h = ops::reshape(g, x, vec![1, shape[0], shape[1]]);
        let h = self.tconv1.forward(g, ctx, h);
        let h = ops::relu(g, h);
        let h = self.tconv2.forward(g, ctx, h);
        let h = ops::relu(g, h);
        let t_out = g.value(h).shape()[2];
        debug_assert_eq!(t_out, 4 * shape[1]);
        ops::reshape(g, h, vec![self.out_channels, t_out])
    }
}

impl<T: Scalar> Module<T> for Upsample4<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        self.tconv1.visit(f);
        self.tconv2.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        self.tconv1.visit_mut(f);
        self.tconv2.visit_mut(f);
    }
}
