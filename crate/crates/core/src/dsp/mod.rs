//! Time-domain audio I/O, resampling, the mel-spectrogram front end and the
//! NCCF pitch extractor shared by all models.
//!
//! Everything here is a pure function of its inputs and safe to call from
//! any number of threads.

mod mel;
mod pitch;
mod resample;
pub(crate) mod stft;
mod wav;

pub use mel::{hz_to_mel, mel_filterbank, mel_spectrogram, mel_to_hz};
pub use pitch::extract_pitch;
pub use resample::resample;
pub use wav::{load_wav, save_wav};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("audio file not found: {0}")]
    MissingFile(String),
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("target sample rate must be positive")]
    InvalidTargetRate,
    #[error("audio sample rate {audio} Hz does not match config {config} Hz")]
    SampleRateMismatch { audio: u32, config: u32 },
    #[error("empty audio")]
    EmptyAudio,
    #[error("invalid pitch range: need 0 < f0_min < f0_max <= sample_rate/2")]
    InvalidPitchRange,
    #[error("invalid DSP config: {0}")]
    InvalidConfig(String),
    #[error("mel geometry mismatch: {0}")]
    MelGeometry(String),
}

/// Mono time-domain signal with its sample rate. Amplitudes live in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        AudioBuffer {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// A sine tone, handy for tests and synthetic corpora.
    pub fn sine(freq_hz: f64, seconds: f64, amplitude: f64, sample_rate: u32) -> Self {
        let n = (seconds * sample_rate as f64).round() as usize;
        let samples = (0..n)
            .map(|i| {
                amplitude
                    * (2.0 * std::f64::consts::PI * freq_hz * i as f64 / sample_rate as f64).sin()
            })
            .collect();
        AudioBuffer::new(samples, sample_rate)
    }
}

/// Spectrogram front-end parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DspConfig {
    pub sample_rate: u32,
    pub win_size: usize,
    pub hop_size: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            sample_rate: 22050,
            win_size: 1024,
            hop_size: 256,
            n_mels: 80,
            f_min: 0.0,
            f_max: 11025.0,
            log_floor: 1e-5,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        if self.hop_size == 0 || self.hop_size > self.win_size {
            return Err(DspError::InvalidConfig(format!(
                "hop_size {} must be in 1..=win_size {}",
                self.hop_size, self.win_size
            )));
        }
        if self.n_mels == 0 {
            return Err(DspError::InvalidConfig("n_mels must be >= 1".into()));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= nyquist) {
            return Err(DspError::InvalidConfig(format!(
                "need 0 <= f_min < f_max <= {nyquist}, got [{}, {}]",
                self.f_min, self.f_max
            )));
        }
        if self.log_floor <= 0.0 {
            return Err(DspError::InvalidConfig("log_floor must be positive".into()));
        }
        Ok(())
    }

    /// Centered framing: `floor(n / hop) + 1` frames for any n >= 1.
    pub fn frame_count(&self, n_samples: usize) -> usize {
        n_samples / self.hop_size + 1
    }
}

/// Log-mel frame matrix, row-major `[n_mels][n_frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    bands: Vec<f64>,
    n_mels: usize,
    n_frames: usize,
    pub config: DspConfig,
}

impl MelSpectrogram {
    pub fn new(bands: Vec<f64>, n_mels: usize, n_frames: usize, config: DspConfig) -> Self {
        assert_eq!(bands.len(), n_mels * n_frames);
        MelSpectrogram {
            bands,
            n_mels,
            n_frames,
            config,
        }
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn band(&self, m: usize) -> &[f64] {
        &self.bands[m * self.n_frames..(m + 1) * self.n_frames]
    }

    pub fn at(&self, m: usize, t: usize) -> f64 {
        self.bands[m * self.n_frames + t]
    }

    pub fn data(&self) -> &[f64] {
        &self.bands
    }

    /// Column `t` as a fresh `n_mels`-vector.
    pub fn frame(&self, t: usize) -> Vec<f64> {
        (0..self.n_mels).map(|m| self.at(m, t)).collect()
    }

    /// Keep only the first `n` frames.
    pub fn truncated(&self, n: usize) -> MelSpectrogram {
        self.frames_range(0, n)
    }

    /// Copy of the frame columns `start..end`.
    pub fn frames_range(&self, start: usize, end: usize) -> MelSpectrogram {
        assert!(start <= end && end <= self.n_frames);
        let n = end - start;
        let mut bands = Vec::with_capacity(self.n_mels * n);
        for m in 0..self.n_mels {
            bands.extend_from_slice(&self.band(m)[start..end]);
        }
        MelSpectrogram::new(bands, self.n_mels, n, self.config)
    }

    /// Convert to an autodiff tensor of shape `[n_mels, n_frames]`.
    pub fn to_tensor<T: crate::autodiff::Scalar>(&self) -> crate::autodiff::Tensor<T> {
        crate::autodiff::Tensor::from_f64s(&[self.n_mels, self.n_frames], &self.bands)
    }

    /// Build from a `[n_mels, n_frames]` tensor (e.g. a model output).
    pub fn from_tensor<T: crate::autodiff::Scalar>(
        t: &crate::autodiff::Tensor<T>,
        config: DspConfig,
    ) -> Result<Self, DspError> {
        if t.rank() != 2 || t.shape()[0] != config.n_mels {
            return Err(DspError::MelGeometry(format!(
                "expected [{} x T] tensor, got {:?}",
                config.n_mels,
                t.shape()
            )));
        }
        Ok(MelSpectrogram::new(
            t.to_f64_vec(),
            t.shape()[0],
            t.shape()[1],
            config,
        ))
    }
}

/// Per-frame fundamental frequency; 0 Hz encodes an unvoiced frame.
/// The frame grid is identical to the mel-spectrogram grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchContour {
    pub f0: Vec<f64>,
    pub voiced: Vec<bool>,
}

impl PitchContour {
    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    /// Extend or cut to `n` frames; added frames are unvoiced.
    pub fn resized(&self, n: usize) -> PitchContour {
        let mut f0 = self.f0.clone();
        let mut voiced = self.voiced.clone();
        f0.resize(n, 0.0);
        voiced.resize(n, false);
        PitchContour { f0, voiced }
    }
}
