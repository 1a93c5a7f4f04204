//! CTC loss: forward dynamic programming in log space over the extended
//! blank-interleaved label lattice, plus a literal path-enumeration oracle.
//!
//! The blank token is always the last index `V` of the `V + 1` columns.

use crate::autodiff::{ops, Graph, NodeId, Scalar, Tensor};

use super::LossError;

/// Stand-in for log(0) that keeps log-space arithmetic NaN-free.
const NEG_INF: f64 = -1e30;

/// Per-step log-probabilities `[T, V+1]` with a target token sequence.
#[derive(Debug, Clone)]
pub struct CtcInputs<T: Scalar> {
    pub log_probs: Tensor<T>,
    pub targets: Vec<usize>,
    pub vocab_size: usize,
}

impl<T: Scalar> CtcInputs<T> {
    /// Validate shapes, row normalization (within 1e-6) and target range.
    pub fn new(
        log_probs: Tensor<T>,
        targets: Vec<usize>,
        vocab_size: usize,
    ) -> Result<Self, LossError> {
        if log_probs.rank() != 2 || log_probs.shape()[1] != vocab_size + 1 {
            return Err(LossError::ShapeMismatch(format!(
                "log_probs must be [T, {}], got {:?}",
                vocab_size + 1,
                log_probs.shape()
            )));
        }
        let (steps, cols) = (log_probs.shape()[0], log_probs.shape()[1]);
        for t in 0..steps {
            let row = &log_probs.data()[t * cols..(t + 1) * cols];
            let sum: f64 = row.iter().map(|&v| v.into_f64().exp()).sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(LossError::RowsNotNormalized { row: t, sum });
            }
        }
        for &id in &targets {
            if id >= vocab_size {
                return Err(LossError::ClassOutOfRange {
                    id,
                    classes: vocab_size,
                });
            }
        }
        Ok(CtcInputs {
            log_probs,
            targets,
            vocab_size,
        })
    }

    pub fn steps(&self) -> usize {
        self.log_probs.shape()[0]
    }
}

/// Shortest admissible input length: every token plus a separating blank
/// between adjacent repeats.
fn min_steps(targets: &[usize]) -> usize {
    let repeats = targets.windows(2).filter(|w| w[0] == w[1]).count();
    targets.len() + repeats
}

/// Build the CTC loss onto an existing graph. `log_probs` is a `[T, V+1]`
/// node; gradients flow back through it to whatever produced it.
pub fn ctc_loss_graph<T: Scalar>(
    g: &mut Graph<T>,
    log_probs: NodeId,
    targets: &[usize],
    vocab_size: usize,
) -> Result<NodeId, LossError> {
    let shape = g.value(log_probs).shape().to_vec();
    if shape.len() != 2 || shape[1] != vocab_size + 1 {
        return Err(LossError::ShapeMismatch(format!(
            "log_probs must be [T, {}], got {:?}",
            vocab_size + 1,
            shape
        )));
    }
    let steps = shape[0];
    for &id in targets {
        if id >= vocab_size {
            return Err(LossError::ClassOutOfRange {
                id,
                classes: vocab_size,
            });
        }
    }
    if min_steps(targets) > steps {
        return Err(LossError::CtcInfeasible {
            needed: min_steps(targets),
            steps,
        });
    }

    let blank = vocab_size;
    // extended labels: blank, y1, blank, y2, ..., blank
    let mut ext = Vec::with_capacity(2 * targets.len() + 1);
    ext.push(blank);
    for &y in targets {
        ext.push(y);
        ext.push(blank);
    }
    let s_len = ext.len();

    // per-step label log-probs: gather columns of log_probs by ext labels
    let lp_ext = ops::index_select(g, log_probs, 1, &ext); // [T, S]

    // skip-transition mask: allowed when label is not blank and differs
    // from the label two positions back
    let skip_mask: Vec<f64> = (0..s_len)
        .map(|s| {
            if ext[s] != blank && s >= 2 && ext[s] != ext[s - 2] {
                0.0
            } else {
                NEG_INF
            }
        })
        .collect();
    let skip_mask = g.constant(Tensor::from_f64s(&[s_len], &skip_mask));

    let init_mask: Vec<f64> = (0..s_len).map(|s| if s < 2 { 0.0 } else { NEG_INF }).collect();
    let init_mask = g.constant(Tensor::from_f64s(&[s_len], &init_mask));

    let row = |g: &mut Graph<T>, t: usize| {
        let r = ops::slice(g, lp_ext, 0, t, t + 1); // [1, S]
        ops::reshape(g, r, vec![s_len])
    };

    let row0 = row(g, 0);
    let mut alpha = ops::add(g, row0, init_mask);
    let pad1 = g.constant(Tensor::from_f64s(&[1], &[NEG_INF]));
    let pad2 = g.constant(Tensor::from_f64s(&[2], &[NEG_INF, NEG_INF]));
    for t in 1..steps {
        let stay = alpha;
        let part1 = ops::slice(g, alpha, 0, 0, s_len - 1);
        let step1 = ops::concat(g, &[pad1, part1], 0);
        let candidates = if s_len >= 3 {
            let part2 = ops::slice(g, alpha, 0, 0, s_len - 2);
            let shifted2 = ops::concat(g, &[pad2, part2], 0);
            let step2 = ops::add(g, shifted2, skip_mask);
            log_sum_exp3(g, stay, step1, step2)
        } else {
            log_sum_exp2(g, stay, step1)
        };
        let row_t = row(g, t);
        alpha = ops::add(g, candidates, row_t);
    }

    // total probability ends on the final blank or the final label
    let total = if s_len == 1 {
        alpha
    } else {
        let last = ops::slice(g, alpha, 0, s_len - 1, s_len);
        let prev = ops::slice(g, alpha, 0, s_len - 2, s_len - 1);
        log_sum_exp2(g, last, prev)
    };
    let total = ops::sum_all(g, total);
    Ok(ops::neg(g, total))
}

fn log_sum_exp2<T: Scalar>(g: &mut Graph<T>, a: NodeId, b: NodeId) -> NodeId {
    let m = ops::maximum(g, a, b);
    let da = ops::sub(g, a, m);
    let db = ops::sub(g, b, m);
    let ea = ops::exp(g, da);
    let eb = ops::exp(g, db);
    let sum = ops::add(g, ea, eb);
    let l = ops::log(g, sum);
    ops::add(g, m, l)
}

fn log_sum_exp3<T: Scalar>(g: &mut Graph<T>, a: NodeId, b: NodeId, c: NodeId) -> NodeId {
    let m0 = ops::maximum(g, a, b);
    let m = ops::maximum(g, m0, c);
    let mut acc = None;
    for x in [a, b, c] {
        let d = ops::sub(g, x, m);
        let e = ops::exp(g, d);
        acc = Some(match acc {
            None => e,
            Some(prev) => ops::add(g, prev, e),
        });
    }
    let l = ops::log(g, acc.unwrap());
    ops::add(g, m, l)
}

/// CTC loss value and its gradient w.r.t. the log-probabilities.
pub fn ctc_loss<T: Scalar>(inputs: &CtcInputs<T>) -> Result<(f64, Tensor<T>), LossError> {
    let mut g = Graph::new();
    let lp = g.leaf(inputs.log_probs.clone());
    let loss = ctc_loss_graph(&mut g, lp, &inputs.targets, inputs.vocab_size)?;
    let value = g.value(loss).scalar().into_f64();
    g.backward(loss).expect("ctc backward");
    let grad = g
        .grad(lp)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(inputs.log_probs.shape()));
    Ok((value, grad))
}

/// Literal realization of the alignment-path set: enumerate every length-T
/// label sequence, collapse it, and sum the probabilities of those that
/// collapse to the target. Exponential; guarded to `(V+1)^T <= 1e6`.
pub fn ctc_brute_force<T: Scalar>(inputs: &CtcInputs<T>) -> Result<f64, LossError> {
    let steps = inputs.steps();
    let cols = inputs.vocab_size + 1;
    let space = (cols as f64).powi(steps as i32);
    if space > 1e6 {
        return Err(LossError::SearchSpaceTooLarge {
            space,
            limit: 1e6,
        });
    }
    let lp = inputs.log_probs.data();
    let blank = inputs.vocab_size;
    let mut path = vec![0usize; steps];
    let mut total = 0.0f64;
    loop {
        // probability of this path
        let mut p = 0.0f64;
        for (t, &lab) in path.iter().enumerate() {
            p += lp[t * cols + lab].into_f64();
        }
        if collapses_to(&path, blank, &inputs.targets) {
            total += p.exp();
        }
        // odometer increment
        let mut t = 0;
        loop {
            if t == steps {
                return Ok(-total.ln());
            }
            path[t] += 1;
            if path[t] < cols {
                break;
            }
            path[t] = 0;
            t += 1;
        }
    }
}

fn collapses_to(path: &[usize], blank: usize, targets: &[usize]) -> bool {
    let mut collapsed = Vec::new();
    let mut prev = usize::MAX;
    for &lab in path {
        if lab != prev && lab != blank {
            collapsed.push(lab);
        }
        prev = lab;
    }
    collapsed == targets
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn uniform_inputs(steps: usize, vocab: usize, targets: Vec<usize>) -> CtcInputs<f64> {
        let cols = vocab + 1;
        let p = (1.0 / cols as f64).ln();
        CtcInputs::new(
            Tensor::from_f64s(&[steps, cols], &vec![p; steps * cols]),
            targets,
            vocab,
        )
        .unwrap()
    }

    fn random_inputs(rng: &mut impl Rng, steps: usize, vocab: usize) -> CtcInputs<f64> {
        let cols = vocab + 1;
        let mut data = Vec::with_capacity(steps * cols);
        for _ in 0..steps {
            let logits: Vec<f64> = (0..cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let m = logits.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = logits.iter().map(|v| (v - m).exp()).sum();
            data.extend(logits.iter().map(|v| v - m - z.ln()));
        }
        let max_len = steps.min(3);
        let len = rng.gen_range(0..=max_len);
        let targets = (0..len).map(|_| rng.gen_range(0..vocab)).collect();
        CtcInputs::new(Tensor::from_f64s(&[steps, cols], &data), targets, vocab).unwrap()
    }

    #[test]
    fn hand_case_two_steps_uniform() {
        // T=2, V=1, all probs 0.5, target "a": paths {(a,-),(-,a),(a,a)}
        let inputs = uniform_inputs(2, 1, vec![0]);
        let (loss, _) = ctc_loss(&inputs).unwrap();
        let expected = -(0.75f64.ln());
        assert!((loss - expected).abs() < 1e-12, "loss {loss}");
        assert!((loss - 0.287682).abs() < 1e-6);
        let brute = ctc_brute_force(&inputs).unwrap();
        assert!((brute - expected).abs() < 1e-12);
    }

    #[test]
    fn repeated_token_needs_separating_blank() {
        let inputs = uniform_inputs(2, 1, vec![0, 0]);
        assert!(matches!(
            ctc_loss(&inputs),
            Err(LossError::CtcInfeasible { needed: 3, steps: 2 })
        ));
    }

    #[test]
    fn empty_target_single_step_is_blank_prob() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let inputs = random_inputs(&mut rng, 1, 2);
        let inputs = CtcInputs::new(inputs.log_probs.clone(), vec![], 2).unwrap();
        let (loss, _) = ctc_loss(&inputs).unwrap();
        let blank_lp = inputs.log_probs.data()[2];
        assert!((loss + blank_lp).abs() < 1e-9);
    }

    #[test]
    fn matches_brute_force_on_random_cases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut checked = 0;
        for _ in 0..60 {
            let steps = rng.gen_range(1..=6);
            let vocab = rng.gen_range(1..=4);
            let inputs = random_inputs(&mut rng, steps, vocab);
            if min_steps(&inputs.targets) > steps {
                assert!(matches!(ctc_loss(&inputs), Err(LossError::CtcInfeasible { .. })));
                continue;
            }
            let (fast, _) = ctc_loss(&inputs).unwrap();
            let brute = ctc_brute_force(&inputs).unwrap();
            assert!(
                (fast - brute).abs() < 1e-9,
                "T={steps} V={vocab} targets={:?}: {fast} vs {brute}",
                inputs.targets
            );
            checked += 1;
        }
        assert!(checked > 20);
    }

    #[test]
    fn one_hot_rows_brute_force_hits_zero_or_infinity() {
        // deterministic rows: path "a then blank" has probability 1
        let lp = Tensor::<f64>::from_f64s(&[2, 2], &[0.0, NEG_INF, NEG_INF, 0.0]);
        let inputs = CtcInputs {
            log_probs: lp,
            targets: vec![0],
            vocab_size: 1,
        };
        let loss = ctc_brute_force(&inputs).unwrap();
        assert!(loss.abs() < 1e-9);
        let impossible = CtcInputs {
            log_probs: inputs.log_probs.clone(),
            targets: vec![],
            vocab_size: 1,
        };
        assert!(ctc_brute_force(&impossible).unwrap().is_infinite());
    }

    #[test]
    fn vocabulary_relabeling_leaves_loss_unchanged() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let steps = rng.gen_range(2..=5);
            let vocab = 3usize;
            let inputs = random_inputs(&mut rng, steps, vocab);
            if min_steps(&inputs.targets) > steps {
                continue;
            }
            // permute vocabulary ids (blank stays last)
            let perm = [2usize, 0, 1];
            let cols = vocab + 1;
            let mut data = vec![0.0f64; steps * cols];
            for t in 0..steps {
                for v in 0..vocab {
                    data[t * cols + perm[v]] = inputs.log_probs.data()[t * cols + v];
                }
                data[t * cols + vocab] = inputs.log_probs.data()[t * cols + vocab];
            }
            let permuted = CtcInputs::new(
                Tensor::<f64>::from_f64s(&[steps, cols], &data),
                inputs.targets.iter().map(|&y| perm[y]).collect(),
                vocab,
            )
            .unwrap();
            let (a, _) = ctc_loss(&inputs).unwrap();
            let (b, _) = ctc_loss(&permuted).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use crate::autodiff::grad_check;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let inputs = random_inputs(&mut rng, 4, 2);
        let targets = vec![0, 1];
        let err = grad_check(
            |g, x| ctc_loss_graph(g, x, &targets, 2).unwrap(),
            &inputs.log_probs,
            1e-5,
        );
        assert!(err < 1e-7, "err {err}");
    }

    #[test]
    fn rejects_unnormalized_rows_and_bad_targets() {
        let bad = CtcInputs::new(Tensor::<f64>::from_f64s(&[1, 2], &[-0.1, -0.1]), vec![], 1);
        assert!(matches!(bad, Err(LossError::RowsNotNormalized { .. })));
        let lp = Tensor::<f64>::from_f64s(&[1, 2], &[0.5f64.ln(), 0.5f64.ln()]);
        let bad = CtcInputs::new(lp, vec![1], 1);
        assert!(matches!(bad, Err(LossError::ClassOutOfRange { .. })));
    }
}
