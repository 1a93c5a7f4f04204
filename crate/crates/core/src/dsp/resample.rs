//! Windowed-sinc resampling, 16 taps per output sample.

use super::{AudioBuffer, DspError};

const HALF_TAPS: isize = 8;

/// Resample to `target_rate`. Output length is `round(n * target / source)`.
/// Equal rates return the input bit-identically.
pub fn resample(audio: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer, DspError> {
    if target_rate == 0 {
        return Err(DspError::InvalidTargetRate);
    }
    if target_rate == audio.sample_rate {
        return Ok(audio.clone());
    }
    let src_rate = audio.sample_rate as f64;
    let dst_rate = target_rate as f64;
    let ratio = dst_rate / src_rate;
    let n_out = (audio.samples.len() as f64 * ratio).round() as usize;
    // anti-aliasing cutoff at the narrower Nyquist
    let cutoff = ratio.min(1.0);
    let src = &audio.samples;
    let n_in = src.len() as isize;

    let mut out = Vec::with_capacity(n_out);
    for j in 0..n_out {
        let t = j as f64 / ratio;
        let center = t.floor() as isize;
        let mut acc = 0.0;
        for i in (center - HALF_TAPS + 1)..=(center + HALF_TAPS) {
            if i < 0 || i >= n_in {
                continue;
            }
            let u = t - i as f64;
            acc += src[i as usize] * windowed_sinc(u, cutoff);
        }
        out.push(acc);
    }
    Ok(AudioBuffer::new(out, target_rate))
}

fn windowed_sinc(u: f64, cutoff: f64) -> f64 {
    if u.abs() >= HALF_TAPS as f64 {
        return 0.0;
    }
    let window = 0.5 + 0.5 * (std::f64::consts::PI * u / HALF_TAPS as f64).cos();
    cutoff * sinc(cutoff * u) * window
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}
