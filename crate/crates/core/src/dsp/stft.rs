//! Short-time Fourier analysis/synthesis with centered framing.
//!
//! Frames are centered via reflect padding of win/2 on both sides, so the
//! frame count is `floor(n / hop) + 1` regardless of window size, and the
//! inverse transform returns exactly `(T - 1) * hop` samples.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub struct Stft {
    pub win: usize,
    pub hop: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(win: usize, hop: usize) -> Self {
        assert!(hop > 0 && hop <= win);
        let mut planner = FftPlanner::new();
        Stft {
            win,
            hop,
            window: hann(win),
            forward: planner.plan_fft_forward(win),
            inverse: planner.plan_fft_inverse(win),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.win / 2 + 1
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        n_samples / self.hop + 1
    }

    /// Complex half-spectrum per frame, row-major `[n_frames][n_bins]`.
    pub fn forward(&self, samples: &[f64]) -> Vec<Complex<f64>> {
        assert!(!samples.is_empty());
        let pad = self.win / 2;
        let n_frames = self.n_frames(samples.len());
        let n_bins = self.n_bins();
        let mut out = vec![Complex::new(0.0, 0.0); n_frames * n_bins];
        let mut buf = vec![Complex::new(0.0, 0.0); self.win];
        for t in 0..n_frames {
            for k in 0..self.win {
                let p = (t * self.hop + k) as isize - pad as isize;
                buf[k] = Complex::new(reflect_read(samples, p) * self.window[k], 0.0);
            }
            self.forward.process(&mut buf);
            out[t * n_bins..(t + 1) * n_bins].copy_from_slice(&buf[..n_bins]);
        }
        out
    }

    /// Power spectrum `|X|^2`, row-major `[n_frames][n_bins]`.
    pub fn power(&self, samples: &[f64]) -> Vec<f64> {
        self.forward(samples).iter().map(|c| c.norm_sqr()).collect()
    }

    /// Weighted overlap-add inverse of a half-spectrum. Returns
    /// `(n_frames - 1) * hop` samples.
    pub fn inverse(&self, spec: &[Complex<f64>], n_frames: usize) -> Vec<f64> {
        let n_bins = self.n_bins();
        assert_eq!(spec.len(), n_frames * n_bins);
        let pad = self.win / 2;
        let full_len = (n_frames - 1) * self.hop + self.win;
        let mut acc = vec![0.0f64; full_len];
        let mut wsum = vec![0.0f64; full_len];
        let mut buf = vec![Complex::new(0.0, 0.0); self.win];
        let scale = 1.0 / self.win as f64;
        for t in 0..n_frames {
            let frame = &spec[t * n_bins..(t + 1) * n_bins];
            buf[..n_bins].copy_from_slice(frame);
            // conjugate symmetry for the upper half
            for k in n_bins..self.win {
                buf[k] = frame[self.win - k].conj();
            }
            self.inverse.process(&mut buf);
            for k in 0..self.win {
                let v = buf[k].re * scale;
                acc[t * self.hop + k] += v * self.window[k];
                wsum[t * self.hop + k] += self.window[k] * self.window[k];
            }
        }
        let out_len = (n_frames - 1) * self.hop;
        let mut out = Vec::with_capacity(out_len);
        for p in 0..out_len {
            let idx = p + pad;
            let w = wsum[idx];
            out.push(if w > 1e-9 { acc[idx] / w } else { 0.0 });
        }
        out
    }
}

pub fn hann(win: usize) -> Vec<f64> {
    (0..win)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / win as f64).cos())
        .collect()
}

/// Read `samples[p]` with reflect padding (edge not repeated), folding for
/// signals shorter than the padding.
pub fn reflect_read(samples: &[f64], p: isize) -> f64 {
    let n = samples.len() as isize;
    if n == 1 {
        return samples[0];
    }
    let mut i = p;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return samples[i as usize];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_law() {
        let stft = Stft::new(1024, 256);
        assert_eq!(stft.n_frames(110250), 431);
        assert_eq!(stft.n_frames(1), 1);
        assert_eq!(stft.n_frames(256), 2);
    }

    #[test]
    fn analysis_synthesis_reconstructs_interior() {
        let stft = Stft::new(256, 64);
        let signal: Vec<f64> = (0..2000)
            .map(|i| (2.0 * std::f64::consts::PI * 300.0 * i as f64 / 8000.0).sin() * 0.7)
            .collect();
        let spec = stft.forward(&signal);
        let n_frames = stft.n_frames(signal.len());
        let back = stft.inverse(&spec, n_frames);
        assert_eq!(back.len(), (n_frames - 1) * 64);
        // interior samples reconstruct to high accuracy
        for i in 256..back.len().saturating_sub(256) {
            assert!((back[i] - signal[i]).abs() < 1e-8, "sample {i}");
        }
    }

    #[test]
    fn reflect_read_folds() {
        let s = [1.0, 2.0, 3.0];
        assert_eq!(reflect_read(&s, -1), 2.0);
        assert_eq!(reflect_read(&s, 3), 2.0);
        assert_eq!(reflect_read(&s, 4), 1.0);
        assert_eq!(reflect_read(&s, -10), 3.0);
    }
}
