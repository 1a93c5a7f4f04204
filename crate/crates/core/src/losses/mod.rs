//! The four training objectives: dual cross-entropy over accent and gender
//! classes, CTC over token sequences, additive-angular-margin speaker loss,
//! and masked mel-spectrogram MSE.
//!
//! Each loss builds onto a [`Graph`] so analytic gradients come from the
//! tape; value-level wrappers exist where callers only need the number.

mod ctc;

pub use ctc::{ctc_brute_force, ctc_loss, ctc_loss_graph, CtcInputs};

use crate::autodiff::{ops, Graph, NodeId, Scalar, Tensor};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("class id {id} out of range for {classes} classes")]
    ClassOutOfRange { id: usize, classes: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("AAM scale must be positive, got {0}")]
    InvalidScale(f64),
    #[error("AAM margin must satisfy 0 <= m < pi/2, got {0}")]
    InvalidMargin(f64),
    #[error("mel loss mask selects no frames")]
    MaskAllZero,
    #[error("mel loss mask must be binary, found {0}")]
    MaskNotBinary(f64),
    #[error("no valid CTC alignment: target needs {needed} steps, input has {steps}")]
    CtcInfeasible { needed: usize, steps: usize },
    #[error("CTC brute force search space {space:.3e} exceeds limit {limit:.0e}")]
    SearchSpaceTooLarge { space: f64, limit: f64 },
    #[error("log-prob row {row} sums to {sum}, not 1")]
    RowsNotNormalized { row: usize, sum: f64 },
}

/// Cross-entropy of `logits` against a hard label: `-log_softmax(x)[y]`.
pub fn cross_entropy_graph<T: Scalar>(
    g: &mut Graph<T>,
    logits: NodeId,
    class: usize,
) -> Result<NodeId, LossError> {
    let shape = g.value(logits).shape().to_vec();
    if shape.len() != 1 {
        return Err(LossError::ShapeMismatch(format!(
            "logits must be a vector, got {shape:?}"
        )));
    }
    if class >= shape[0] {
        return Err(LossError::ClassOutOfRange {
            id: class,
            classes: shape[0],
        });
    }
    let lsm = ops::log_softmax(g, logits, 0);
    let picked = ops::index_select(g, lsm, 0, &[class]);
    let s = ops::sum_all(g, picked);
    Ok(ops::neg(g, s))
}

/// Sum of softmax cross-entropies over the accent head and the gender head.
pub fn accent_gender_loss_graph<T: Scalar>(
    g: &mut Graph<T>,
    accent_logits: NodeId,
    accent_class: usize,
    gender_logits: NodeId,
    gender_class: usize,
) -> Result<NodeId, LossError> {
    let la = cross_entropy_graph(g, accent_logits, accent_class)?;
    let lg = cross_entropy_graph(g, gender_logits, gender_class)?;
    Ok(ops::add(g, la, lg))
}

/// Value-level dual cross-entropy.
pub fn accent_gender_loss<T: Scalar>(
    accent_logits: &Tensor<T>,
    accent_class: usize,
    gender_logits: &Tensor<T>,
    gender_class: usize,
) -> Result<f64, LossError> {
    let mut g = Graph::new();
    let xa = g.constant(accent_logits.clone());
    let xg = g.constant(gender_logits.clone());
    let loss = accent_gender_loss_graph(&mut g, xa, accent_class, xg, gender_class)?;
    Ok(g.value(loss).scalar().into_f64())
}

/// Additive angular margin loss over cosine similarities.
///
/// The embedding and each class weight row are L2-normalized; the target
/// class angle gets `+margin` before the scaled softmax cross-entropy.
pub fn aam_loss_graph<T: Scalar>(
    g: &mut Graph<T>,
    embedding: NodeId,
    class_weights: NodeId,
    class: usize,
    scale: f64,
    margin: f64,
) -> Result<NodeId, LossError> {
    if scale <= 0.0 {
        return Err(LossError::InvalidScale(scale));
    }
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&margin) {
        return Err(LossError::InvalidMargin(margin));
    }
    let e_shape = g.value(embedding).shape().to_vec();
    let w_shape = g.value(class_weights).shape().to_vec();
    if e_shape.len() != 1 || w_shape.len() != 2 || w_shape[1] != e_shape[0] {
        return Err(LossError::ShapeMismatch(format!(
            "embedding {e_shape:?} vs class weights {w_shape:?}"
        )));
    }
    let k = w_shape[0];
    if class >= k {
        return Err(LossError::ClassOutOfRange { id: class, classes: k });
    }
    let d = e_shape[0];

    let e = ops::l2_normalize(g, embedding);
    let w = ops::l2_normalize(g, class_weights);
    let e_col = ops::reshape(g, e, vec![d, 1]);
    let cos_col = ops::matmul(g, w, e_col); // [K, 1]
    let cos = ops::reshape(g, cos_col, vec![k]);
    // clamp away from +-1 so the implied angle stays differentiable
    let hi = g.constant(Tensor::full(&[1], T::from_f64(1.0 - 1e-7)));
    let lo = g.constant(Tensor::full(&[1], T::from_f64(-1.0 + 1e-7)));
    let cos = ops::minimum(g, cos, hi);
    let cos = ops::maximum(g, cos, lo);

    let cos_t = ops::index_select(g, cos, 0, &[class]); // [1]
    let cos_t_sq = ops::mul(g, cos_t, cos_t);
    let sin_sq = ops::affine(g, cos_t_sq, -1.0, 1.0);
    let sin_t = ops::sqrt(g, sin_sq);
    // cos(theta + m) = cos theta cos m - sin theta sin m
    let a = ops::scale(g, cos_t, margin.cos());
    let b = ops::scale(g, sin_t, margin.sin());
    let margined = ops::sub(g, a, b);
    let delta = ops::sub(g, margined, cos_t); // [1]

    let mut onehot = vec![0.0f64; k];
    onehot[class] = 1.0;
    let onehot = g.constant(Tensor::from_f64s(&[k], &onehot));
    let shift = ops::mul(g, onehot, delta); // [K]
    let adjusted = ops::add(g, cos, shift);
    let logits = ops::scale(g, adjusted, scale);
    cross_entropy_graph(g, logits, class)
}

/// Value-level AAM loss.
pub fn aam_loss<T: Scalar>(
    embedding: &Tensor<T>,
    class_weights: &Tensor<T>,
    class: usize,
    scale: f64,
    margin: f64,
) -> Result<f64, LossError> {
    let mut g = Graph::new();
    let e = g.constant(embedding.clone());
    let w = g.constant(class_weights.clone());
    let loss = aam_loss_graph(&mut g, e, w, class, scale, margin)?;
    Ok(g.value(loss).scalar().into_f64())
}

/// Predicted/target mel frames `[N, n_bands]` with a per-frame binary mask.
#[derive(Debug, Clone)]
pub struct MelLossInputs<T: Scalar> {
    pub predicted: Tensor<T>,
    pub target: Tensor<T>,
    pub mask: Vec<f64>,
}

/// Masked mel MSE.
///
/// The mask is per frame; squared errors are summed across the bands of the
/// kept frames and divided by `n_bands * sum(mask)`, i.e. a per-element mean
/// over unmasked content.
pub fn mel_loss_graph<T: Scalar>(
    g: &mut Graph<T>,
    predicted: NodeId,
    target: NodeId,
    mask: &[f64],
) -> Result<NodeId, LossError> {
    let p_shape = g.value(predicted).shape().to_vec();
    let t_shape = g.value(target).shape().to_vec();
    if p_shape != t_shape || p_shape.len() != 2 {
        return Err(LossError::ShapeMismatch(format!(
            "predicted {p_shape:?} vs target {t_shape:?}"
        )));
    }
    if mask.len() != p_shape[0] {
        return Err(LossError::ShapeMismatch(format!(
            "mask length {} vs {} frames",
            mask.len(),
            p_shape[0]
        )));
    }
    for &d in mask {
        if d != 0.0 && d != 1.0 {
            return Err(LossError::MaskNotBinary(d));
        }
    }
    let kept: f64 = mask.iter().sum();
    if kept == 0.0 {
        return Err(LossError::MaskAllZero);
    }
    let n_bands = p_shape[1];
    let diff = ops::sub(g, target, predicted);
    let sq = ops::mul(g, diff, diff);
    let per_frame = ops::sum_axis(g, sq, 1, false); // [N]
    let mask_node = g.constant(Tensor::from_f64s(&[mask.len()], mask));
    let masked = ops::mul(g, per_frame, mask_node);
    let total = ops::sum_all(g, masked);
    Ok(ops::scale(g, total, 1.0 / (n_bands as f64 * kept)))
}

/// Value-level masked mel MSE.
pub fn mel_loss<T: Scalar>(inputs: &MelLossInputs<T>) -> Result<f64, LossError> {
    let mut g = Graph::new();
    let p = g.constant(inputs.predicted.clone());
    let t = g.constant(inputs.target.clone());
    let loss = mel_loss_graph(&mut g, p, t, &inputs.mask)?;
    Ok(g.value(loss).scalar().into_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()
    }

    #[test]
    fn uniform_logits_are_ln40_plus_ln2() {
        let xa = Tensor::<f64>::full(&[40], 0.3);
        let xg = Tensor::<f64>::full(&[2], -1.1);
        let loss = accent_gender_loss(&xa, 7, &xg, 1).unwrap();
        let expected = 40f64.ln() + 2f64.ln();
        assert!((loss - expected).abs() < 1e-12, "loss {loss}");
        assert!((expected - 4.3820).abs() < 1e-4);
    }

    #[test]
    fn loss_decreases_monotonically_toward_zero_on_correct_class() {
        let mut prev = f64::INFINITY;
        for margin in [0.0, 1.0, 3.0, 8.0, 20.0] {
            let mut xa = vec![0.0; 40];
            xa[3] = margin;
            let xa = Tensor::<f64>::from_f64s(&[40], &xa);
            let xg = Tensor::<f64>::from_f64s(&[2], &[margin, 0.0]);
            let loss = accent_gender_loss(&xa, 3, &xg, 0).unwrap();
            assert!(loss < prev);
            prev = loss;
        }
        assert!(prev < 1e-7);
    }

    #[test]
    fn dual_ce_matches_direct_summation() {
        let mut r = rng(3);
        for _ in 0..20 {
            let xa = random_vec(&mut r, 40);
            let xg = random_vec(&mut r, 2);
            let (ya, yg) = (r.gen_range(0..40), r.gen_range(0..2));
            let loss = accent_gender_loss(
                &Tensor::<f64>::from_f64s(&[40], &xa),
                ya,
                &Tensor::<f64>::from_f64s(&[2], &xg),
                yg,
            )
            .unwrap();
            // independent direct evaluation of the two-term formula
            let za: f64 = xa.iter().map(|v| v.exp()).sum();
            let zg: f64 = xg.iter().map(|v| v.exp()).sum();
            let direct = -(xa[ya].exp() / za).ln() - (xg[yg].exp() / zg).ln();
            assert!((loss - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn shift_invariance_per_head() {
        let mut r = rng(4);
        let xa = random_vec(&mut r, 40);
        let xg = random_vec(&mut r, 2);
        let shifted: Vec<f64> = xa.iter().map(|v| v + 11.0).collect();
        let a = accent_gender_loss(
            &Tensor::<f64>::from_f64s(&[40], &xa),
            5,
            &Tensor::<f64>::from_f64s(&[2], &xg),
            0,
        )
        .unwrap();
        let b = accent_gender_loss(
            &Tensor::<f64>::from_f64s(&[40], &shifted),
            5,
            &Tensor::<f64>::from_f64s(&[2], &xg),
            0,
        )
        .unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn class_out_of_range_rejected() {
        let xa = Tensor::<f64>::zeros(&[40]);
        let xg = Tensor::<f64>::zeros(&[2]);
        assert!(matches!(
            accent_gender_loss(&xa, 40, &xg, 0),
            Err(LossError::ClassOutOfRange { id: 40, classes: 40 })
        ));
    }

    #[test]
    fn aam_with_zero_margin_is_softmax_over_cosines() {
        let mut r = rng(5);
        let e = Tensor::<f64>::from_f64s(&[8], &random_vec(&mut r, 8));
        let w = Tensor::<f64>::from_f64s(&[5, 8], &random_vec(&mut r, 40));
        let loss = aam_loss(&e, &w, 2, 1.0, 0.0).unwrap();
        // direct: cosine similarities then plain softmax CE
        let en: f64 = e.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut cosines = Vec::new();
        for kk in 0..5 {
            let row = &w.data()[kk * 8..(kk + 1) * 8];
            let wn: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = row.iter().zip(e.data()).map(|(a, b)| a * b).sum();
            cosines.push(dot / (en * wn));
        }
        let z: f64 = cosines.iter().map(|c| c.exp()).sum();
        let direct = -(cosines[2].exp() / z).ln();
        assert!((loss - direct).abs() < 1e-9, "{loss} vs {direct}");
    }

    #[test]
    fn aam_loss_nondecreasing_in_margin() {
        let mut r = rng(6);
        let e = Tensor::<f64>::from_f64s(&[8], &random_vec(&mut r, 8));
        let w = Tensor::<f64>::from_f64s(&[5, 8], &random_vec(&mut r, 40));
        let mut prev = -f64::INFINITY;
        for m in [0.0, 0.1, 0.2, 0.5, 1.0] {
            let loss = aam_loss(&e, &w, 1, 30.0, m).unwrap();
            assert!(loss >= prev - 1e-12, "m={m}: {loss} < {prev}");
            prev = loss;
        }
    }

    #[test]
    fn aam_matches_direct_formula() {
        let mut r = rng(7);
        for _ in 0..10 {
            let (k, d) = (6usize, 10usize);
            let e = random_vec(&mut r, d);
            let w = random_vec(&mut r, k * d);
            let y = r.gen_range(0..k);
            let (s, m) = (30.0, 0.2);
            let loss = aam_loss(
                &Tensor::<f64>::from_f64s(&[d], &e),
                &Tensor::<f64>::from_f64s(&[k, d], &w),
                y,
                s,
                m,
            )
            .unwrap();
            // independent evaluation
            let en: f64 = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            let cos: Vec<f64> = (0..k)
                .map(|kk| {
                    let row = &w[kk * d..(kk + 1) * d];
                    let wn: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    row.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / (en * wn)
                })
                .collect();
            let theta = cos[y].clamp(-1.0 + 1e-7, 1.0 - 1e-7);
            let margined = theta * m.cos() - (1.0 - theta * theta).sqrt() * m.sin();
            let mut logits: Vec<f64> = cos.iter().map(|c| c * s).collect();
            logits[y] = margined * s;
            let mx = logits.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = logits.iter().map(|v| (v - mx).exp()).sum();
            let direct = -(logits[y] - mx - z.ln());
            assert!((loss - direct).abs() < 1e-9, "{loss} vs {direct}");
        }
    }

    #[test]
    fn mel_loss_identity_is_zero() {
        let x = Tensor::<f64>::from_f64s(&[4, 3], &(0..12).map(|i| i as f64).collect::<Vec<_>>());
        let inputs = MelLossInputs {
            predicted: x.clone(),
            target: x,
            mask: vec![1.0; 4],
        };
        assert_eq!(mel_loss(&inputs).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_gives_c_squared() {
        let c = 0.7f64;
        let x = Tensor::<f64>::zeros(&[5, 8]);
        let y = Tensor::<f64>::full(&[5, 8], c);
        let inputs = MelLossInputs {
            predicted: x,
            target: y,
            mask: vec![1.0; 5],
        };
        let loss = mel_loss(&inputs).unwrap();
        assert!((loss - c * c).abs() < 1e-12);
    }

    #[test]
    fn masked_frames_do_not_contribute() {
        let mut r = rng(9);
        let base = random_vec(&mut r, 4 * 6);
        let target = random_vec(&mut r, 4 * 6);
        let mask = vec![1.0, 0.0, 1.0, 0.0];
        let mut garbage = base.clone();
        for t in [1usize, 3] {
            for b in 0..6 {
                garbage[t * 6 + b] = 999.0;
            }
        }
        let a = mel_loss(&MelLossInputs {
            predicted: Tensor::<f64>::from_f64s(&[4, 6], &base),
            target: Tensor::<f64>::from_f64s(&[4, 6], &target),
            mask: mask.clone(),
        })
        .unwrap();
        let b = mel_loss(&MelLossInputs {
            predicted: Tensor::<f64>::from_f64s(&[4, 6], &garbage),
            target: Tensor::<f64>::from_f64s(&[4, 6], &target),
            mask,
        })
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mel_loss_matches_direct_masked_sum() {
        let mut r = rng(10);
        for _ in 0..10 {
            let (n, bands) = (r.gen_range(2..8), r.gen_range(2..10));
            let p = random_vec(&mut r, n * bands);
            let t = random_vec(&mut r, n * bands);
            let mask: Vec<f64> = (0..n).map(|_| if r.gen_bool(0.7) { 1.0 } else { 0.0 }).collect();
            if mask.iter().sum::<f64>() == 0.0 {
                continue;
            }
            let loss = mel_loss(&MelLossInputs {
                predicted: Tensor::<f64>::from_f64s(&[n, bands], &p),
                target: Tensor::<f64>::from_f64s(&[n, bands], &t),
                mask: mask.clone(),
            })
            .unwrap();
            let mut acc = 0.0;
            for i in 0..n {
                for b in 0..bands {
                    acc += mask[i] * (t[i * bands + b] - p[i * bands + b]).powi(2);
                }
            }
            let direct = acc / (bands as f64 * mask.iter().sum::<f64>());
            assert!((loss - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn all_zero_mask_rejected() {
        let x = Tensor::<f64>::zeros(&[3, 2]);
        let inputs = MelLossInputs {
            predicted: x.clone(),
            target: x,
            mask: vec![0.0; 3],
        };
        assert!(matches!(mel_loss(&inputs), Err(LossError::MaskAllZero)));
    }

    #[test]
    fn loss_gradients_pass_grad_check() {
        use crate::autodiff::grad_check;
        let mut r = rng(11);

        // dual cross-entropy w.r.t. accent logits
        let xa = Tensor::<f64>::from_f64s(&[7], &random_vec(&mut r, 7));
        let xg = random_vec(&mut r, 2);
        let err = grad_check(
            |g, x| {
                let gl = g.constant(Tensor::from_f64s(&[2], &xg));
                accent_gender_loss_graph(g, x, 3, gl, 1).unwrap()
            },
            &xa,
            1e-5,
        );
        assert!(err < 1e-8, "dual CE err {err}");

        // AAM w.r.t. embedding and weights
        let e = Tensor::<f64>::from_f64s(&[6], &random_vec(&mut r, 6));
        let wdata = random_vec(&mut r, 4 * 6);
        let err = grad_check(
            |g, x| {
                let w = g.constant(Tensor::from_f64s(&[4, 6], &wdata));
                aam_loss_graph(g, x, w, 2, 30.0, 0.2).unwrap()
            },
            &e,
            1e-5,
        );
        assert!(err < 1e-6, "AAM emb err {err}");
        let w = Tensor::<f64>::from_f64s(&[4, 6], &wdata);
        let edata = e.clone();
        let err = grad_check(
            |g, x| {
                let e = g.constant(edata.clone());
                aam_loss_graph(g, e, x, 2, 30.0, 0.2).unwrap()
            },
            &w,
            1e-5,
        );
        assert!(err < 1e-6, "AAM weights err {err}");

        // masked mel MSE w.r.t. prediction
        let p = Tensor::<f64>::from_f64s(&[5, 4], &random_vec(&mut r, 20));
        let tdata = random_vec(&mut r, 20);
        let err = grad_check(
            |g, x| {
                let t = g.constant(Tensor::from_f64s(&[5, 4], &tdata));
                mel_loss_graph(g, x, t, &[1.0, 0.0, 1.0, 1.0, 0.0]).unwrap()
            },
            &p,
            1e-5,
        );
        assert!(err < 1e-9, "mel err {err}");
    }
}
