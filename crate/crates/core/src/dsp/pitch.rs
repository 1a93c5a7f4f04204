//! Fundamental-frequency extraction: normalized cross-correlation over a
//! lag window, voicing threshold, parabolic peak refinement, and median
//! smoothing.

use super::{AudioBuffer, DspConfig, DspError, PitchContour};

const VOICING_THRESHOLD: f64 = 0.3;
const MEDIAN_WIDTH: usize = 5;
const ENERGY_GATE_RMS: f64 = 1e-4;
/// Correlation window: 3 hops of context per frame.
const CONTEXT_HOPS: usize = 3;

/// Extract a pitch contour on the mel frame grid (`floor(n/hop) + 1` frames).
pub fn extract_pitch(
    audio: &AudioBuffer,
    cfg: &DspConfig,
    f0_min: f64,
    f0_max: f64,
) -> Result<PitchContour, DspError> {
    if !(f0_min > 0.0 && f0_min < f0_max && f0_max <= audio.sample_rate as f64 / 2.0) {
        return Err(DspError::InvalidPitchRange);
    }
    if audio.is_empty() {
        return Err(DspError::EmptyAudio);
    }
    let rate = audio.sample_rate as f64;
    let n_frames = cfg.frame_count(audio.len());
    let window = CONTEXT_HOPS * cfg.hop_size;
    let lag_min = (rate / f0_max).floor().max(1.0) as usize;
    let lag_max = (rate / f0_min).ceil() as usize;
    let src = &audio.samples;
    let read = |i: usize| -> f64 {
        if i < src.len() {
            src[i]
        } else {
            0.0
        }
    };

    let mut f0 = vec![0.0f64; n_frames];
    let mut voiced = vec![false; n_frames];
    for t in 0..n_frames {
        let start = t * cfg.hop_size;
        let mut energy = 0.0;
        for i in 0..window {
            let v = read(start + i);
            energy += v * v;
        }
        if (energy / window as f64).sqrt() < ENERGY_GATE_RMS {
            continue;
        }

        // NCCF over the lag range
        let mut nccf = vec![0.0f64; lag_max + 2];
        for lag in lag_min..=lag_max {
            let (mut cross, mut e0, mut e1) = (0.0, 0.0, 0.0);
            for i in 0..window {
                let a = read(start + i);
                let b = read(start + i + lag);
                cross += a * b;
                e0 += a * a;
                e1 += b * b;
            }
            nccf[lag] = cross / (e0 * e1 + 1e-12).sqrt();
        }
        let best_lag = (lag_min..=lag_max)
            .max_by(|&a, &b| nccf[a].partial_cmp(&nccf[b]).unwrap())
            .unwrap();
        if nccf[best_lag] < VOICING_THRESHOLD {
            continue;
        }
        // parabolic refinement around the peak
        let refined = if best_lag > lag_min && best_lag < lag_max {
            let (a, b, c) = (nccf[best_lag - 1], nccf[best_lag], nccf[best_lag + 1]);
            let denom = a - 2.0 * b + c;
            let delta = if denom.abs() > 1e-12 {
                (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            best_lag as f64 + delta
        } else {
            best_lag as f64
        };
        let hz = rate / refined;
        if hz >= f0_min && hz <= f0_max {
            f0[t] = hz;
            voiced[t] = true;
        }
    }

    median_smooth(&mut f0, &mut voiced);
    Ok(PitchContour { f0, voiced })
}

/// Median filter over voiced frames; unvoiced frames stay at 0.
fn median_smooth(f0: &mut [f64], voiced: &mut [bool]) {
    let n = f0.len();
    let half = MEDIAN_WIDTH / 2;
    let orig = f0.to_vec();
    let orig_voiced = voiced.to_vec();
    for t in 0..n {
        if !orig_voiced[t] {
            continue;
        }
        let lo = t.saturating_sub(half);
        let hi = (t + half + 1).min(n);
        let mut vals: Vec<f64> = (lo..hi).filter(|&i| orig_voiced[i]).map(|i| orig[i]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        f0[t] = vals[vals.len() / 2];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_sine_220_recovered_within_3hz() {
        let audio = AudioBuffer::sine(220.0, 1.0, 0.6, 22050);
        let cfg = DspConfig::default();
        let pitch = extract_pitch(&audio, &cfg, 60.0, 400.0).unwrap();
        assert_eq!(pitch.len(), cfg.frame_count(audio.len()));
        let interior = &pitch.f0[2..pitch.len() - 4];
        let hits = interior
            .iter()
            .filter(|&&f| f > 0.0 && (f - 220.0).abs() <= 3.0)
            .count();
        assert!(
            hits as f64 >= 0.9 * interior.len() as f64,
            "{hits}/{} frames within 3 Hz",
            interior.len()
        );
    }

    #[test]
    fn silence_is_unvoiced() {
        let audio = AudioBuffer::new(vec![0.0; 22050], 22050);
        let pitch = extract_pitch(&audio, &DspConfig::default(), 60.0, 400.0).unwrap();
        assert!(pitch.voiced.iter().all(|v| !v));
        assert!(pitch.f0.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn low_amplitude_noise_is_unvoiced() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<f64> = (0..22050).map(|_| rng.gen_range(-5e-5..5e-5)).collect();
        let audio = AudioBuffer::new(samples, 22050);
        let pitch = extract_pitch(&audio, &DspConfig::default(), 60.0, 400.0).unwrap();
        assert!(pitch.voiced.iter().all(|v| !v));
    }

    #[test]
    fn median_filter_removes_single_outlier() {
        let mut f0 = vec![220.0; 20];
        let mut voiced = vec![true; 20];
        f0[10] = 440.0;
        median_smooth(&mut f0, &mut voiced);
        assert_eq!(f0[10], 220.0);
        assert!(f0.iter().all(|&f| f == 220.0));
    }

    #[test]
    fn voiced_iff_nonzero_f0() {
        let audio = AudioBuffer::sine(150.0, 0.5, 0.4, 22050);
        let pitch = extract_pitch(&audio, &DspConfig::default(), 60.0, 400.0).unwrap();
        for (v, &f) in pitch.voiced.iter().zip(&pitch.f0) {
            assert_eq!(*v, f > 0.0);
        }
    }

    #[test]
    fn invalid_range_rejected() {
        let audio = AudioBuffer::sine(150.0, 0.1, 0.4, 22050);
        let cfg = DspConfig::default();
        assert!(matches!(
            extract_pitch(&audio, &cfg, 400.0, 60.0),
            Err(DspError::InvalidPitchRange)
        ));
        assert!(matches!(
            extract_pitch(&audio, &cfg, 60.0, 20000.0),
            Err(DspError::InvalidPitchRange)
        ));
    }
}
