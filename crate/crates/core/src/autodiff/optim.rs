//! Optimizer policies: SGD with momentum and AdamW, plus cosine annealing.

use std::collections::BTreeMap;

use super::tensor::{Scalar, Tensor};

/// `lr(t) = lr_min + (lr0 - lr_min) * (1 + cos(pi * t / t_max)) / 2`
#[derive(Debug, Clone, Copy)]
pub struct CosineSchedule {
    pub lr0: f64,
    pub lr_min: f64,
    pub t_max: u64,
}

impl CosineSchedule {
    pub fn new(lr0: f64, lr_min: f64, t_max: u64) -> Self {
        CosineSchedule { lr0, lr_min, t_max }
    }

    pub fn lr(&self, t: u64) -> f64 {
        let t = t.min(self.t_max) as f64;
        let t_max = self.t_max.max(1) as f64;
        self.lr_min + 0.5 * (self.lr0 - self.lr_min) * (1.0 + (std::f64::consts::PI * t / t_max).cos())
    }
}

/// Update rule hyperparameters; the learning rate arrives per step from
/// whatever schedule drives training.
#[derive(Debug, Clone, Copy)]
pub enum Policy {
    SgdMomentum {
        momentum: f64,
        weight_decay: f64,
    },
    AdamW {
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    },
}

impl Policy {
    /// SGD defaults used for classifier training: momentum 0.9, decay 2e-4.
    pub fn sgd_default() -> Self {
        Policy::SgdMomentum {
            momentum: 0.9,
            weight_decay: 2e-4,
        }
    }

    /// AdamW defaults used for sequence-model training: decay 1e-3.
    pub fn adamw_default() -> Self {
        Policy::AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-3,
        }
    }
}

struct Slot<T: Scalar> {
    first: Tensor<T>,
    second: Option<Tensor<T>>,
}

/// Per-parameter optimizer state keyed by parameter name.
pub struct Optimizer<T: Scalar> {
    policy: Policy,
    slots: BTreeMap<String, Slot<T>>,
    step_count: u64,
    current_lr: f64,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(policy: Policy) -> Self {
        Optimizer {
            policy,
            slots: BTreeMap::new(),
            step_count: 0,
            current_lr: 0.0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Apply one update with learning rate `lr` to every parameter that has
    /// a gradient. Panics on parameter/gradient shape mismatch.
    pub fn step<'a>(
        &mut self,
        lr: f64,
        params: impl Iterator<Item = (&'a str, &'a mut Tensor<T>)>,
        grads: &BTreeMap<String, Tensor<T>>,
    ) {
        self.begin_step(lr);
        for (name, param) in params {
            if let Some(grad) = grads.get(name) {
                self.update_one(name, param, grad);
            }
        }
    }

    /// Start a step at learning rate `lr`; parameters are then fed one by
    /// one through [`Optimizer::update_one`] (the shape visitors hand out
    /// mutable tensors individually).
    pub fn begin_step(&mut self, lr: f64) {
        self.step_count += 1;
        self.current_lr = lr;
    }

    pub fn update_one(&mut self, name: &str, param: &mut Tensor<T>, grad: &Tensor<T>) {
        let t_step = self.step_count;
        let lr = self.current_lr;
        {
            assert_eq!(
                param.shape(),
                grad.shape(),
                "optimizer: gradient shape mismatch for `{name}`"
            );
            let slot = self.slots.entry(name.to_string()).or_insert_with(|| Slot {
                first: Tensor::zeros(param.shape()),
                second: matches!(self.policy, Policy::AdamW { .. })
                    .then(|| Tensor::zeros(param.shape())),
            });
            assert_eq!(
                slot.first.shape(),
                param.shape(),
                "optimizer: state shape mismatch for `{name}`"
            );
            match self.policy {
                Policy::SgdMomentum {
                    momentum,
                    weight_decay,
                } => {
                    let mom = T::from_f64(momentum);
                    let wd = T::from_f64(weight_decay);
                    let lr_t = T::from_f64(lr);
                    let v = slot.first.data_mut();
                    let p = param.data_mut();
                    for i in 0..p.len() {
                        let g = grad.data()[i] + wd * p[i];
                        v[i] = mom * v[i] + g;
                        p[i] -= lr_t * v[i];
                    }
                }
                Policy::AdamW {
                    beta1,
                    beta2,
                    eps,
                    weight_decay,
                } => {
                    let b1 = T::from_f64(beta1);
                    let b2 = T::from_f64(beta2);
                    let e = T::from_f64(eps);
                    let lr_t = T::from_f64(lr);
                    let wd = T::from_f64(weight_decay);
                    let bc1 = T::from_f64(1.0 - beta1.powi(t_step as i32));
                    let bc2 = T::from_f64(1.0 - beta2.powi(t_step as i32));
                    let second = slot.second.as_mut().expect("AdamW state");
                    let m = slot.first.data_mut();
                    let p = param.data_mut();
                    let v = second.data_mut();
                    for i in 0..p.len() {
                        let g = grad.data()[i];
                        p[i] -= lr_t * wd * p[i];
                        m[i] = b1 * m[i] + (T::one() - b1) * g;
                        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                        let mhat = m[i] / bc1;
                        let vhat = v[i] / bc2;
                        p[i] -= lr_t * mhat / (vhat.sqrt() + e);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(value: f64) -> (String, Tensor<f64>) {
        ("p".to_string(), Tensor::from_vec(vec![value]))
    }

    fn grads_of(g: f64) -> BTreeMap<String, Tensor<f64>> {
        let mut m = BTreeMap::new();
        m.insert("p".to_string(), Tensor::from_vec(vec![g]));
        m
    }

    #[test]
    fn plain_sgd_step() {
        let (name, mut p) = single_param(1.0);
        let mut opt = Optimizer::new(Policy::SgdMomentum {
            momentum: 0.0,
            weight_decay: 0.0,
        });
        opt.step(0.1, std::iter::once((name.as_str(), &mut p)), &grads_of(0.5));
        assert!((p.data()[0] - (1.0 - 0.1 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn adamw_single_step_matches_hand_derivation() {
        let (name, mut p) = single_param(1.0);
        let (lr, b1, b2, eps, wd) = (0.1, 0.9, 0.999, 1e-8, 0.01);
        let g = 0.5;
        let mut opt = Optimizer::new(Policy::AdamW {
            beta1: b1,
            beta2: b2,
            eps,
            weight_decay: wd,
        });
        opt.step(lr, std::iter::once((name.as_str(), &mut p)), &grads_of(g));

        // hand computation of the decoupled update at t = 1
        let mut expected = 1.0 - lr * wd * 1.0;
        let m = (1.0 - b1) * g;
        let v = (1.0 - b2) * g * g;
        let mhat = m / (1.0 - b1);
        let vhat = v / (1.0 - b2);
        expected -= lr * mhat / (vhat.sqrt() + eps);
        assert!((p.data()[0] - expected).abs() < 1e-15, "got {}", p.data()[0]);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let s = CosineSchedule::new(1e-3, 1e-5, 100);
        assert!((s.lr(0) - 1e-3).abs() < 1e-12);
        assert!((s.lr(100) - 1e-5).abs() < 1e-12);
        assert!((s.lr(50) - (1e-5 + 0.5 * (1e-3 - 1e-5))).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "gradient shape mismatch")]
    fn shape_mismatch_panics() {
        let mut p = Tensor::<f64>::from_vec(vec![1.0, 2.0]);
        let mut opt = Optimizer::new(Policy::sgd_default());
        opt.step(0.1, std::iter::once(("p", &mut p)), &grads_of(0.5));
    }

    #[test]
    fn momentum_accumulates_velocity() {
        let (name, mut p) = single_param(0.0);
        let mut opt = Optimizer::new(Policy::SgdMomentum {
            momentum: 0.9,
            weight_decay: 0.0,
        });
        opt.step(1.0, std::iter::once((name.as_str(), &mut p)), &grads_of(1.0));
        opt.step(1.0, std::iter::once((name.as_str(), &mut p)), &grads_of(1.0));
        // v1 = 1, v2 = 1.9 -> p = -(1 + 1.9)
        assert!((p.data()[0] + 2.9).abs() < 1e-12);
    }
}
