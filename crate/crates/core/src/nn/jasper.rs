//! Jasper-style residual convolution stack (3 blocks x 3 sub-blocks).

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ops, Graph, NodeId, Scalar, Tensor};

use super::common::{dropout, BatchNorm1d, Conv1dLayer, Ctx, VarKind};
use super::Module;

struct SubBlock<T: Scalar> {
    conv: Conv1dLayer<T>,
    bn: BatchNorm1d<T>,
}

struct Block<T: Scalar> {
    subs: Vec<SubBlock<T>>,
    skip: Option<Conv1dLayer<T>>, // pointwise projection when channels change
}

/// Three residual blocks of three conv-batchnorm-relu-dropout sub-blocks,
/// stride 1 with same padding so the frame count is preserved.
pub struct JasperStack<T: Scalar> {
    blocks: Vec<Block<T>>,
    dropout_rate: f64,
    pub out_channels: usize,
}

impl<T: Scalar> JasperStack<T> {
    pub fn new(
        name: &str,
        in_channels: usize,
        channels: usize,
        kernel: usize,
        dropout_rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut blocks = Vec::new();
        let mut c_in = in_channels;
        for b in 0..3 {
            let mut subs = Vec::new();
            let mut c = c_in;
            for s in 0..3 {
                subs.push(SubBlock {
                    conv: Conv1dLayer::same(format!("{name}.b{b}.s{s}.conv"), c, channels, kernel, rng),
                    bn: BatchNorm1d::new(format!("{name}.b{b}.s{s}.bn"), channels),
                });
                c = channels;
            }
            let skip = (c_in != channels).then(|| {
                Conv1dLayer::new(format!("{name}.b{b}.skip"), c_in, channels, 1, 1, 1, 0, 1, rng)
            });
            blocks.push(Block { subs, skip });
            c_in = channels;
        }
        JasperStack {
            blocks,
            dropout_rate,
            out_channels: channels,
        }
    }

    /// `mel` is `[C_in, T]`; returns `[C_out, T]`.
    pub fn forward(&self, g: &mut Graph<T>, ctx: &mut Ctx<T>, mel: NodeId) -> NodeId {
        let shape = g.value(mel).shape().to_vec();
        assert_eq!(shape.len(), 2, "jasper input must be [C, T]");
        let t_len = shape[1];
        let mut x = ops::reshape(g, mel, vec![1, shape[0], t_len]);
        for block in &self.blocks {
            let input = x;
            for (i, sub) in block.subs.iter().enumerate() {
                let c = sub.conv.forward(g, ctx, x);
                let n = sub.bn.forward(g, ctx, c);
                if i + 1 < block.subs.len() {
                    let r = ops::relu(g, n);
                    x = dropout(g, ctx, r, self.dropout_rate);
                } else {
                    // residual joins before the final activation
                    let skip = match &block.skip {
                        Some(proj) => proj.forward(g, ctx, input),
                        None => input,
                    };
                    let summed = ops::add(g, n, skip);
                    let r = ops::relu(g, summed);
                    x = dropout(g, ctx, r, self.dropout_rate);
                }
            }
        }
        ops::reshape(g, x, vec![self.out_channels, t_len])
    }
}

impl<T: Scalar> Module<T> for JasperStack<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        for b in &self.blocks {
            for s in &b.subs {
                s.conv.visit(f);
                s.bn.visit(f);
            }
            if let Some(skip) = &b.skip {
                skip.visit(f);
            }
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        for b in &mut self.blocks {
            for s in &mut b.subs {
                s.conv.visit_mut(f);
                s.bn.visit_mut(f);
            }
            if let Some(skip) = &mut b.skip {
                skip.visit_mut(f);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::nn::common::xavier_tensor;
    use rand::SeedableRng;

    #[test]
    fn stride_one_preserves_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stack = JasperStack::<f64>::new("j", 80, 16, 5, 0.0, &mut rng);
        let mut g = Graph::new();
        let mut ctx = Ctx::infer();
        let x = g.constant(xavier_tensor(&mut rng, &[80, 20], 80, 16));
        let y = stack.forward(&mut g, &mut ctx, x);
        assert_eq!(g.value(y).shape(), &[16, 20]);
    }

    #[test]
    fn zero_input_is_finite_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stack = JasperStack::<f64>::new("j", 8, 4, 3, 0.0, &mut rng);
        let run = || {
            let mut g = Graph::new();
            let mut ctx = Ctx::infer();
            let x = g.constant(Tensor::zeros(&[8, 6]));
            let y = stack.forward(&mut g, &mut ctx, x);
            g.value(y).clone()
        };
        let a = run();
        let b = run();
        assert!(a.all_finite());
        assert_eq!(a, b);
    }

    #[test]
    fn input_gradient_passes_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let stack = JasperStack::<f64>::new("j", 3, 4, 3, 0.0, &mut rng);
        let x = xavier_tensor::<f64>(&mut rng, &[3, 5], 3, 4);
        let err = grad_check(
            |g, x| {
                let mut ctx = Ctx::infer();
                let y = stack.forward(g, &mut ctx, x);
                let sq = ops::mul(g, y, y);
                ops::sum_all(g, sq)
            },
            &x,
            1e-5,
        );
        assert!(err < 1e-4, "err {err}");
    }
}
