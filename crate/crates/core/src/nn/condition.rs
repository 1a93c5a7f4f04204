//! Embedding conditioning: normalize, project to the model dimension, and
//! broadcast-add to every frame.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ops, Graph, NodeId, Scalar, Tensor};

use super::common::{Ctx, Linear, VarKind};
use super::Module;

pub struct Condition<T: Scalar> {
    proj: Linear<T>,
    pub model_dim: usize,
}

impl<T: Scalar> Condition<T> {
    pub fn new(name: &str, embedding_dim: usize, model_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Condition {
            proj: Linear::new(format!("{name}.proj"), embedding_dim, model_dim, true, rng),
            model_dim,
        }
    }

    /// `x` is `[T, d]`, `embedding` is `[e]`; returns `[T, d]`.
    ///
    /// A zero embedding passes the l2-normalize guard as a zero vector, so
    /// the offset reduces to the projection bias.
    pub fn forward(&self, g: &mut Graph<T>, ctx: &Ctx<T>, x: NodeId, embedding: NodeId) -> NodeId {
        let e = ops::l2_normalize(g, embedding);
        let offset = self.proj.forward_vec(g, ctx, e); // [d]
        ops::add(g, x, offset)
    }
}

impl<T: Scalar> Module<T> for Condition<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        self.proj.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        self.proj.visit_mut(f);
    }
}
