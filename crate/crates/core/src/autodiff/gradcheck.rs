//! Central-difference gradient verification.
//!
//! Finite differences are unreliable in `f32`; callers run checks in `f64`.

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;

/// Compare the analytic gradient of a scalar-valued tensor function against
/// central differences with step `eps`.
///
/// Returns the max over elements of
/// `|analytic - numeric| / max(1, |numeric|)`.
///
/// Note: functions with kinks (e.g. relu at exactly zero) must be evaluated
/// away from the non-differentiable point; the subgradient convention there
/// makes the comparison meaningless.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> f64
where
    F: Fn(&mut Graph<f64>, NodeId) -> NodeId,
{
    let mut g = Graph::new();
    let xid = g.leaf(x.clone());
    let loss = f(&mut g, xid);
    assert_eq!(g.value(loss).numel(), 1, "grad_check: function must return a scalar");
    g.backward(loss).expect("grad_check: backward failed");
    let analytic = g
        .grad(xid)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()));

    let eval = |probe: &Tensor<f64>| -> f64 {
        let mut g = Graph::new();
        let xid = g.leaf(probe.clone());
        let loss = f(&mut g, xid);
        let v = g.value(loss).scalar();
        assert!(v.is_finite(), "grad_check: non-finite value during probing");
        v
    };

    let mut max_err = 0.0f64;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(&plus) - eval(&minus)) / (2.0 * eps);
        let err = (analytic.data()[i] - numeric).abs() / numeric.abs().max(1.0);
        if err > max_err {
            max_err = err;
        }
    }
    max_err
}
