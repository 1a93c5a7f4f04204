//! The differentiation tape.
//!
//! A [`Graph`] is a define-by-run tape: forward ops execute eagerly,
//! appending one node per op, so node order is already topological and
//! [`Graph::backward`] visits each node exactly once in reverse.

use std::collections::BTreeMap;

use super::tensor::{Scalar, Tensor};
use thiserror::Error;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

/// Per-parent gradient contributions, aligned with the node's parent list.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>) -> Vec<Tensor<T>>>;

pub(crate) struct Node<T: Scalar> {
    pub value: Tensor<T>,
    pub requires_grad: bool,
    pub parents: Vec<NodeId>,
    pub backward: Option<BackwardFn<T>>,
}

#[derive(Debug, Error)]
pub enum BackwardError {
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("loss is detached: no differentiable inputs reach it")]
    DetachedLoss,
}

/// Reverse-mode differentiation tape over dense tensors.
///
/// A graph and its tensors are confined to one thread during construction
/// and backward; distinct graphs can run in parallel.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    params: BTreeMap<String, NodeId>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            params: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, false, vec![], None)
    }

    /// An anonymous differentiable leaf (gradient retrievable via [`Graph::grad`]).
    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, true, vec![], None)
    }

    /// A named differentiable leaf. Registering the same name twice returns
    /// the original node, so shared parameters accumulate a single gradient.
    pub fn param(&mut self, name: &str, value: &Tensor<T>) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        let id = self.push(value.clone(), true, vec![], None);
        self.params.insert(name.to_string(), id);
        id
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Gradient accumulated at `id` by previous [`Graph::backward`] calls.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads[id.0].as_ref()
    }

    /// Gradients of all named parameters that received one.
    pub fn param_grads(&self) -> BTreeMap<String, Tensor<T>> {
        self.params
            .iter()
            .filter_map(|(name, id)| self.grads[id.0].clone().map(|g| (name.clone(), g)))
            .collect()
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    /// Propagate d(loss)/d(node) to every differentiable leaf. Repeated calls
    /// accumulate into existing gradients unless [`Graph::zero_grads`] ran.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), BackwardError> {
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.numel() != 1 {
            return Err(BackwardError::NonScalarLoss(loss_node.value.shape().to_vec()));
        }
        if !loss_node.requires_grad {
            return Err(BackwardError::DetachedLoss);
        }

        // Local seed buffer so accumulated grads from earlier calls survive.
        let mut seed: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        seed[loss.0] = Some(Tensor::full(self.nodes[loss.0].value.shape(), T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(grad_out) = seed[idx].take() else {
                continue;
            };
            accumulate(&mut self.grads[idx], &grad_out);
            let node = &self.nodes[idx];
            if let Some(backward) = &node.backward {
                let parent_grads = backward(&grad_out);
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for (parent, grad) in node.parents.clone().into_iter().zip(parent_grads) {
                    if self.nodes[parent.0].requires_grad {
                        accumulate(&mut seed[parent.0], &grad);
                    }
                }
            }
        }
        Ok(())
    }

    pub(crate) fn push(
        &mut self,
        value: Tensor<T>,
        requires_grad: bool,
        parents: Vec<NodeId>,
        backward: Option<BackwardFn<T>>,
    ) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            value,
            requires_grad,
            parents,
            backward,
        });
        self.grads.push(None);
        id
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, grad: &Tensor<T>) {
    match slot {
        Some(existing) => {
            assert_eq!(existing.shape(), grad.shape(), "gradient shape mismatch");
            let dst = existing.data_mut();
            for (d, s) in dst.iter_mut().zip(grad.data()) {
                *d += *s;
            }
        }
        None => *slot = Some(grad.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ops;

    #[test]
    fn sum_backward_is_ones() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, -2.0, 3.0]));
        let loss = ops::sum_all(&mut g, x);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn relu_kills_negative_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![-1.0, -0.5, -2.0]));
        let y = ops::relu(&mut g, x);
        let loss = ops::sum_all(&mut g, y);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![2.0]));
        let loss = ops::sum_all(&mut g, x);
        g.backward(loss).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0]);
        g.zero_grads();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(BackwardError::NonScalarLoss(_))));
    }

    #[test]
    fn detached_loss_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::scalar_tensor(1.0));
        assert!(matches!(g.backward(x), Err(BackwardError::DetachedLoss)));
    }

    #[test]
    fn shared_param_registers_once() {
        let mut g = Graph::<f64>::new();
        let w = Tensor::from_vec(vec![1.0, 2.0]);
        let a = g.param("w", &w);
        let b = g.param("w", &w);
        assert_eq!(a, b);
    }

    #[test]
    fn backward_linearity_scales_grads() {
        let run = |scale: f64| {
            let mut g = Graph::<f64>::new();
            let x = g.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
            let sq = ops::mul(&mut g, x, x);
            let s = ops::sum_all(&mut g, sq);
            let loss = ops::scale(&mut g, s, scale);
            g.backward(loss).unwrap();
            g.grad(x).unwrap().data().to_vec()
        };
        let g1 = run(1.0);
        let g3 = run(3.0);
        for (a, b) in g1.iter().zip(&g3) {
            assert!((a * 3.0 - b).abs() < 1e-12);
        }
    }
}
