//! Learnable band-pass front end over raw 16 kHz waveforms.
//!
//! Each channel is a rectangular band-pass parametrized by its low cutoff
//! and bandwidth, realized as a Hamming-windowed difference of sincs. Both
//! parameters stay learnable: the kernel is built from them inside the
//! graph, so gradients reach the cutoffs. Output is log(|y| + eps).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ops, Graph, NodeId, Scalar, Tensor};

use super::common::{Ctx, VarKind};
use super::{Module, NnError};

pub const SINC_SAMPLE_RATE: u32 = 16_000;
const F_FLOOR_HZ: f64 = 30.0;
const BW_FLOOR_HZ: f64 = 50.0;
const LOG_EPS: f64 = 1e-4;

pub struct SincConv<T: Scalar> {
    name: String,
    theta_low: Tensor<T>,  // [C] raw low-cutoff parameters, Hz
    theta_band: Tensor<T>, // [C] raw bandwidth parameters, Hz
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl<T: Scalar> SincConv<T> {
    /// Cutoffs initialized on a mel-spaced grid over (0, Nyquist).
    pub fn new(name: &str, channels: usize, kernel: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(kernel % 2 == 1, "sinc kernel must be odd");
        let nyquist = SINC_SAMPLE_RATE as f64 / 2.0;
        let mel_hi = crate::dsp::hz_to_mel(nyquist - 200.0);
        let mel_lo = crate::dsp::hz_to_mel(F_FLOOR_HZ);
        let mut low = Vec::with_capacity(channels);
        let mut band = Vec::with_capacity(channels);
        for c in 0..channels {
            let m0 = mel_lo + (mel_hi - mel_lo) * c as f64 / channels as f64;
            let m1 = mel_lo + (mel_hi - mel_lo) * (c + 1) as f64 / channels as f64;
            let f0 = crate::dsp::mel_to_hz(m0);
            let f1 = crate::dsp::mel_to_hz(m1);
            let jitter = 1.0 + rng.gen_range(-0.01..0.01);
            low.push(f0 * jitter);
            band.push((f1 - f0).max(BW_FLOOR_HZ * 2.0));
        }
        SincConv {
            name: name.to_string(),
            theta_low: Tensor::from_f64s(&[channels], &low),
            theta_band: Tensor::from_f64s(&[channels], &band),
            channels,
            kernel,
            stride,
        }
    }

    /// Override the band layout (used by tests probing specific bands).
    pub fn set_bands(&mut self, low_hz: &[f64], bandwidth_hz: &[f64]) {
        assert_eq!(low_hz.len(), self.channels);
        assert_eq!(bandwidth_hz.len(), self.channels);
        self.theta_low = Tensor::from_f64s(&[self.channels], low_hz);
        self.theta_band = Tensor::from_f64s(&[self.channels], bandwidth_hz);
    }

    pub fn out_len(&self, n_samples: usize) -> usize {
        (n_samples - self.kernel) / self.stride + 1
    }

    /// Effective clamped band edges `(low, high)` in Hz per channel.
    pub fn effective_bands(&self) -> Vec<(f64, f64)> {
        let nyquist = SINC_SAMPLE_RATE as f64 / 2.0;
        (0..self.channels)
            .map(|c| {
                let f1 = self.theta_low.data()[c]
                    .into_f64()
                    .abs()
                    .max(F_FLOOR_HZ)
                    .min(nyquist - 2.0 * BW_FLOOR_HZ);
                let bw = self.theta_band.data()[c].into_f64().abs().max(BW_FLOOR_HZ);
                (f1, (f1 + bw).min(nyquist))
            })
            .collect()
    }

    /// `audio16k` is `[n]` raw samples; returns features `[C, T_out]`.
    pub fn forward(&self, g: &mut Graph<T>, ctx: &Ctx<T>, audio16k: NodeId) -> Result<NodeId, NnError> {
        let n = g.value(audio16k).numel();
        if n < self.kernel {
            return Err(NnError::BelowReceptiveField {
                frames: n,
                required: self.kernel,
            });
        }
        let tl = super::common::leaf(g, ctx, &format!("{}.low_hz", self.name), &self.theta_low);
        let tb = super::common::leaf(g, ctx, &format!("{}.band_hz", self.name), &self.theta_band);
        Ok(self.forward_from_nodes(g, tl, tb, audio16k))
    }

    /// Forward with the cutoff parameters already on the graph; applies the
    /// log-magnitude compression on top of the linear filter response.
    pub fn forward_from_nodes(
        &self,
        g: &mut Graph<T>,
        theta_low: NodeId,
        theta_band: NodeId,
        audio16k: NodeId,
    ) -> NodeId {
        let y = self.forward_linear_from_nodes(g, theta_low, theta_band, audio16k);
        // magnitude + log compression; |y| has a subgradient kink at 0, so
        // gradient checks probe the linear response instead
        let a = ops::abs(g, y);
        let a = ops::affine(g, a, 1.0, LOG_EPS);
        ops::log(g, a)
    }

    /// Linear band-pass filter response `[C, T_out]` with the kernel built
    /// from the cutoff parameter nodes (smooth in the parameters).
    pub fn forward_linear_from_nodes(
        &self,
        g: &mut Graph<T>,
        theta_low: NodeId,
        theta_band: NodeId,
        audio16k: NodeId,
    ) -> NodeId {
        let n = g.value(audio16k).numel();
        let (c, k) = (self.channels, self.kernel);
        let nyquist = SINC_SAMPLE_RATE as f64 / 2.0;

        // clamp cutoffs into (0, Nyquist) with an enforced bandwidth floor
        let f_floor = g.constant(Tensor::full(&[1], T::from_f64(F_FLOOR_HZ)));
        let f_ceil = g.constant(Tensor::full(&[1], T::from_f64(nyquist - 2.0 * BW_FLOOR_HZ)));
        let bw_floor = g.constant(Tensor::full(&[1], T::from_f64(BW_FLOOR_HZ)));
        let nyq = g.constant(Tensor::full(&[1], T::from_f64(nyquist)));
        let tl = ops::abs(g, theta_low);
        let tl = ops::maximum(g, tl, f_floor);
        let f1 = ops::minimum(g, tl, f_ceil); // [C]
        let tb = ops::abs(g, theta_band);
        let bw = ops::maximum(g, tb, bw_floor);
        let hi = ops::add(g, f1, bw);
        let f2 = ops::minimum(g, hi, nyq); // [C]

        // kernel[c, i] = (sin(2 pi f2 t_i) - sin(2 pi f1 t_i)) / (pi t_i sr),
        // center tap 2 (f2 - f1) / sr: a unit-passband-gain band-pass in
        // discrete time; all times a Hamming window
        let sr = SINC_SAMPLE_RATE as f64;
        let half = (k / 2) as isize;
        let t_i: Vec<f64> = (-half..=half).map(|i| i as f64 / sr).collect();
        let inv_pi_t: Vec<f64> = t_i
            .iter()
            .map(|&t| if t == 0.0 { 0.0 } else { 1.0 / (std::f64::consts::PI * t * sr) })
            .collect();
        let mut center = vec![0.0f64; k];
        center[k / 2] = 2.0 / sr;
        let window: Vec<f64> = (0..k)
            .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (k - 1) as f64).cos())
            .collect();

        let t_row = g.constant(Tensor::from_f64s(&[1, k], &t_i));
        let inv_row = g.constant(Tensor::from_f64s(&[1, k], &inv_pi_t));
        let center_row = g.constant(Tensor::from_f64s(&[1, k], &center));
        let window_row = g.constant(Tensor::from_f64s(&[1, k], &window));

        let f1c = ops::reshape(g, f1, vec![c, 1]);
        let f2c = ops::reshape(g, f2, vec![c, 1]);
        let phase1 = ops::matmul(g, f1c, t_row); // [C, K]
        let phase2 = ops::matmul(g, f2c, t_row);
        let s1 = ops::scale(g, phase1, 2.0 * std::f64::consts::PI);
        let s2 = ops::scale(g, phase2, 2.0 * std::f64::consts::PI);
        let sin1 = ops::sin(g, s1);
        let sin2 = ops::sin(g, s2);
        let diff = ops::sub(g, sin2, sin1);
        let main = ops::mul(g, diff, inv_row);
        let amp = ops::sub(g, f2c, f1c); // [C, 1]
        let center_term = ops::mul(g, amp, center_row); // broadcast to [C, K]
        let raw = ops::add(g, main, center_term);
        let kernel = ops::mul(g, raw, window_row);
        let kernel = ops::reshape(g, kernel, vec![c, 1, k]);

        let x = ops::reshape(g, audio16k, vec![1, 1, n]);
        let y = ops::conv1d(g, x, kernel, None, self.stride, 1, 0, 1);
        let t_out = self.out_len(n);
        ops::reshape(g, y, vec![c, t_out])
    }
}

impl<T: Scalar> Module<T> for SincConv<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, VarKind)) {
        f(&format!("{}.low_hz", self.name), &self.theta_low, VarKind::Param);
        f(&format!("{}.band_hz", self.name), &self.theta_band, VarKind::Param);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, VarKind)) {
        f(&format!("{}.low_hz", self.name), &mut self.theta_low, VarKind::Param);
        f(&format!("{}.band_hz", self.name), &mut self.theta_band, VarKind::Param);
    }
}
