//! Mel filterbank and the log-mel spectrogram front end.
//!
//! HTK mel scale, triangular area-unnormalized filters, Hann window,
//! natural-log compression with a fixed floor.

use super::stft::Stft;
use super::{AudioBuffer, DspConfig, DspError, MelSpectrogram};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filterbank, row-major `[n_mels][win/2 + 1]`.
pub fn mel_filterbank(cfg: &DspConfig) -> Vec<f64> {
    let n_bins = cfg.win_size / 2 + 1;
    let mel_lo = hz_to_mel(cfg.f_min);
    let mel_hi = hz_to_mel(cfg.f_max);
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.win_size as f64;
    let mut fb = vec![0.0f64; cfg.n_mels * n_bins];
    for m in 0..cfg.n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f <= center {
                (f - left) / (center - left)
            } else {
                (right - f) / (right - center)
            };
            if w > 0.0 {
                fb[m * n_bins + k] = w;
            }
        }
    }
    fb
}

/// Log-mel spectrogram with centered framing:
/// `floor(n / hop) + 1` frames, each `log(max(fb . |STFT|^2, log_floor))`.
pub fn mel_spectrogram(audio: &AudioBuffer, cfg: &DspConfig) -> Result<MelSpectrogram, DspError> {
    cfg.validate()?;
    if audio.sample_rate != cfg.sample_rate {
        return Err(DspError::SampleRateMismatch {
            audio: audio.sample_rate,
            config: cfg.sample_rate,
        });
    }
    if audio.is_empty() {
        return Err(DspError::EmptyAudio);
    }
    let stft = Stft::new(cfg.win_size, cfg.hop_size);
    let power = stft.power(&audio.samples);
    let n_frames = stft.n_frames(audio.samples.len());
    let n_bins = stft.n_bins();
    let fb = mel_filterbank(cfg);

    let mut bands = vec![0.0f64; cfg.n_mels * n_frames];
    for t in 0..n_frames {
        let p = &power[t * n_bins..(t + 1) * n_bins];
        for m in 0..cfg.n_mels {
            let row = &fb[m * n_bins..(m + 1) * n_bins];
            let mut acc = 0.0;
            for k in 0..n_bins {
                acc += row[k] * p[k];
            }
            bands[m * n_frames + t] = acc.max(cfg.log_floor).ln();
        }
    }
    Ok(MelSpectrogram::new(bands, cfg.n_mels, n_frames, *cfg))
}
