//! Waveform reconstruction from log-mel spectrograms.
//!
//! The shipped vocoder inverts the mel filterbank by a non-negative
//! least-squares pseudo-inverse and recovers phase with Griffin-Lim.
//! An external-vocoder hook accepts a checkpoint that replaces the
//! inversion matrix while keeping the same mel geometry.

use rustfft::num_complex::Complex;

use crate::dsp::{mel_filterbank, stft::Stft, AudioBuffer, DspConfig, MelSpectrogram};

use super::ModelError;

/// Anything that can turn a mel spectrogram back into audio.
pub trait MelVocoder: Send + Sync {
    fn vocode(&self, mel: &MelSpectrogram) -> Result<AudioBuffer, ModelError>;
    fn name(&self) -> &str;
}

/// Griffin-Lim phase recovery over a pseudo-inverted mel filterbank.
#[derive(Debug, Clone)]
pub struct GriffinLim {
    pub iterations: usize,
    pub expected: DspConfig,
}

impl Default for GriffinLim {
    fn default() -> Self {
        GriffinLim {
            iterations: 32,
            expected: DspConfig::default(),
        }
    }
}

impl GriffinLim {
    pub fn new(iterations: usize) -> Self {
        GriffinLim {
            iterations,
            ..Default::default()
        }
    }
}

impl MelVocoder for GriffinLim {
    fn vocode(&self, mel: &MelSpectrogram) -> Result<AudioBuffer, ModelError> {
        let pinv = filterbank_pseudo_inverse(&self.expected);
        vocode_with_inverse(mel, &self.expected, &pinv, self.iterations)
    }

    fn name(&self) -> &str {
        "griffin-lim"
    }
}

/// Reconstruct audio from a log-mel spectrogram: filterbank pseudo-inverse
/// (clamped non-negative), square root to magnitudes, then `iters` rounds
/// of Griffin-Lim. Output length is `(T - 1) * hop` at 22050 Hz.
pub fn griffin_lim_vocode(mel: &MelSpectrogram, iters: usize) -> Result<AudioBuffer, ModelError> {
    GriffinLim::new(iters).vocode(mel)
}

fn check_geometry(mel: &MelSpectrogram, expected: &DspConfig) -> Result<(), ModelError> {
    let c = &mel.config;
    if c.sample_rate != expected.sample_rate
        || c.win_size != expected.win_size
        || c.hop_size != expected.hop_size
        || mel.n_mels() != expected.n_mels
    {
        return Err(ModelError::MelGeometry(format!(
            "expected {}Hz/{}win/{}hop/{} bands, got {}Hz/{}win/{}hop/{} bands",
            expected.sample_rate,
            expected.win_size,
            expected.hop_size,
            expected.n_mels,
            c.sample_rate,
            c.win_size,
            c.hop_size,
            mel.n_mels()
        )));
    }
    Ok(())
}

fn vocode_with_inverse(
    mel: &MelSpectrogram,
    cfg: &DspConfig,
    pinv: &[f64], // [n_bins x n_mels]
    iters: usize,
) -> Result<AudioBuffer, ModelError> {
    check_geometry(mel, cfg)?;
    let n_bins = cfg.win_size / 2 + 1;
    let n_mels = mel.n_mels();
    let n_frames = mel.n_frames();

    // log-mel -> mel power -> linear power (clamped) -> magnitude
    let mut magnitude = vec![0.0f64; n_frames * n_bins];
    for t in 0..n_frames {
        for k in 0..n_bins {
            let mut p = 0.0;
            for m in 0..n_mels {
                p += pinv[k * n_mels + m] * mel.at(m, t).exp();
            }
            magnitude[t * n_bins + k] = p.max(0.0).sqrt();
        }
    }

    let stft = Stft::new(cfg.win_size, cfg.hop_size);
    // zero-phase start
    let mut spec: Vec<Complex<f64>> = magnitude.iter().map(|&m| Complex::new(m, 0.0)).collect();
    let mut audio = stft.inverse(&spec, n_frames);
    for _ in 0..iters {
        if audio.iter().all(|&s| s == 0.0) {
            break;
        }
        let reanalyzed = stft.forward(&audio);
        // keep the target magnitude, adopt the re-analyzed phase
        for (i, c) in reanalyzed.iter().enumerate().take(spec.len()) {
            let norm = c.norm();
            spec[i] = if norm > 1e-12 {
                c * (magnitude[i] / norm)
            } else {
                Complex::new(magnitude[i], 0.0)
            };
        }
        audio = stft.inverse(&spec, n_frames);
    }
    let peak = audio.iter().fold(0.0f64, |a, &s| a.max(s.abs()));
    if peak > 1.0 {
        for s in &mut audio {
            *s /= peak;
        }
    }
    Ok(AudioBuffer::new(audio, cfg.sample_rate))
}

/// Moore-Penrose-style pseudo-inverse of the mel filterbank:
/// `fb^T (fb fb^T)^{-1}`, row-major `[n_bins x n_mels]`.
pub fn filterbank_pseudo_inverse(cfg: &DspConfig) -> Vec<f64> {
    let n_bins = cfg.win_size / 2 + 1;
    let n_mels = cfg.n_mels;
    let fb = mel_filterbank(cfg); // [n_mels x n_bins]

    // gram = fb fb^T, [n_mels x n_mels]
    let mut gram = vec![0.0f64; n_mels * n_mels];
    for a in 0..n_mels {
        for b in a..n_mels {
            let mut acc = 0.0;
            for k in 0..n_bins {
                acc += fb[a * n_bins + k] * fb[b * n_bins + k];
            }
            gram[a * n_mels + b] = acc;
            gram[b * n_mels + a] = acc;
        }
    }
    // slight ridge keeps the solve stable for narrow low-frequency filters
    for i in 0..n_mels {
        gram[i * n_mels + i] += 1e-10;
    }
    let inv = invert_symmetric(&gram, n_mels);

    // pinv = fb^T inv, [n_bins x n_mels]
    let mut pinv = vec![0.0f64; n_bins * n_mels];
    for k in 0..n_bins {
        for m in 0..n_mels {
            let mut acc = 0.0;
            for j in 0..n_mels {
                acc += fb[j * n_bins + k] * inv[j * n_mels + m];
            }
            pinv[k * n_mels + m] = acc;
        }
    }
    pinv
}

/// Gauss-Jordan inversion with partial pivoting.
fn invert_symmetric(a: &[f64], n: usize) -> Vec<f64> {
    let mut aug = vec![0.0f64; n * 2 * n];
    for r in 0..n {
        for c in 0..n {
            aug[r * 2 * n + c] = a[r * n + c];
        }
        aug[r * 2 * n + n + r] = 1.0;
    }
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&x, &y| {
                aug[x * 2 * n + col]
                    .abs()
                    .partial_cmp(&aug[y * 2 * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        if pivot_row != col {
            for c in 0..2 * n {
                aug.swap(col * 2 * n + c, pivot_row * 2 * n + c);
            }
        }
        let pivot = aug[col * 2 * n + col];
        assert!(pivot.abs() > 1e-14, "filterbank gram matrix is singular");
        for c in 0..2 * n {
            aug[col * 2 * n + c] /= pivot;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = aug[r * 2 * n + col];
            if factor == 0.0 {
                continue;
            }
            for c in 0..2 * n {
                let v = aug[col * 2 * n + c];
                aug[r * 2 * n + c] -= factor * v;
            }
        }
    }
    let mut out = vec![0.0f64; n * n];
    for r in 0..n {
        for c in 0..n {
            out[r * n + c] = aug[r * 2 * n + n + c];
        }
    }
    out
}

/// A vocoder whose mel-to-linear inversion matrix comes from a checkpoint
/// (tensor `mel_to_linear` of shape `[n_bins, n_mels]`, plus `geometry`
/// = [sample_rate, win, hop, n_mels]). Phase recovery stays Griffin-Lim.
pub struct ExternalVocoder {
    pinv: Vec<f64>,
    cfg: DspConfig,
    iterations: usize,
    label: String,
}

impl MelVocoder for ExternalVocoder {
    fn vocode(&self, mel: &MelSpectrogram) -> Result<AudioBuffer, ModelError> {
        vocode_with_inverse(mel, &self.cfg, &self.pinv, self.iterations)
    }

    fn name(&self) -> &str {
        &self.label
    }
}

/// Load an external vocoder checkpoint; validates the declared geometry
/// against the expected mel configuration.
pub fn load_external_vocoder(
    path: impl AsRef<std::path::Path>,
    iterations: usize,
) -> Result<ExternalVocoder, ModelError> {
    let ckpt = crate::persist::read_checkpoint(path.as_ref())
        .map_err(|e| ModelError::Persist(e.to_string()))?;
    let geometry = ckpt
        .tensor_f64("geometry")
        .ok_or_else(|| ModelError::Persist("missing `geometry` entry".into()))?;
    if geometry.len() != 4 {
        return Err(ModelError::Persist("`geometry` must hold 4 values".into()));
    }
    let cfg = DspConfig {
        sample_rate: geometry[0] as u32,
        win_size: geometry[1] as usize,
        hop_size: geometry[2] as usize,
        n_mels: geometry[3] as usize,
        ..DspConfig::default()
    };
    let expected = DspConfig::default();
    if cfg.sample_rate != expected.sample_rate
        || cfg.win_size != expected.win_size
        || cfg.hop_size != expected.hop_size
        || cfg.n_mels != expected.n_mels
    {
        return Err(ModelError::MelGeometry(format!(
            "external vocoder declares {}Hz/{}win/{}hop/{} bands",
            cfg.sample_rate, cfg.win_size, cfg.hop_size, cfg.n_mels
        )));
    }
    let n_bins = cfg.win_size / 2 + 1;
    let entry = ckpt
        .entry("mel_to_linear")
        .ok_or_else(|| ModelError::Persist("missing `mel_to_linear` entry".into()))?;
    if entry.shape != [n_bins, cfg.n_mels] {
        return Err(ModelError::MelGeometry(format!(
            "mel_to_linear shape {:?}, expected [{n_bins}, {}]",
            entry.shape, cfg.n_mels
        )));
    }
    Ok(ExternalVocoder {
        pinv: entry.data.iter().map(|&v| v as f64).collect(),
        cfg,
        iterations,
        label: format!("external:{}", path.as_ref().display()),
    })
}
