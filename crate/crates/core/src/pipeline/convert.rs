//! Whole-utterance conversion: mel analysis, phonetic recognition,
//! spectrogram generation under the voice profile, vocoding.

use crate::autodiff::Scalar;
use crate::dsp::{extract_pitch, mel_spectrogram, AudioBuffer, DspConfig, MelSpectrogram};
use crate::models::{Embedding, EmbeddingKind, MelVocoder, ModelBundle};

use super::{PipelineError, VoiceProfile, PITCH_F0_MAX, PITCH_F0_MIN};

/// Extract a voice profile (accent, gender, speaker embeddings) from an
/// audio sample. Ablation bundles have no accent/gender encoder and get
/// zero vectors there.
pub fn profile_from_audio<T: Scalar>(
    bundle: &ModelBundle<T>,
    sample: &AudioBuffer,
) -> Result<VoiceProfile, PipelineError> {
    if sample.is_empty() {
        return Err(PipelineError::EmptyAudio);
    }
    let speaker = bundle.se.forward(sample)?;
    let (accent, gender) = match &bundle.aege {
        Some(aege) => {
            let mel = mel_spectrogram(sample, &DspConfig::default())?;
            let out = aege.forward(&mel)?;
            (out.accent_emb, out.gender_emb)
        }
        None => (
            Embedding::zeros(EmbeddingKind::Accent),
            Embedding::zeros(EmbeddingKind::Gender),
        ),
    };
    Ok(VoiceProfile::new(accent, gender, speaker))
}

/// Convert an utterance. `profile` defaults to the input's own profile
/// (self-conversion). Output is 22050 Hz; its length is
/// `hop * (4 ceil(T/4) - 1)` for `T` input frames.
pub fn convert<T: Scalar>(
    bundle: &ModelBundle<T>,
    audio: &AudioBuffer,
    profile: Option<&VoiceProfile>,
) -> Result<AudioBuffer, PipelineError> {
    let cfg = DspConfig::default();
    if audio.is_empty() {
        return Err(PipelineError::EmptyAudio);
    }
    if audio.sample_rate != cfg.sample_rate {
        return Err(PipelineError::WrongSampleRate {
            expected: cfg.sample_rate,
            got: audio.sample_rate,
        });
    }
    let own_profile;
    let profile = match profile {
        Some(p) => p,
        None => {
            own_profile = profile_from_audio(bundle, audio)?;
            &own_profile
        }
    };
    let mel_out = convert_to_mel(bundle, audio, profile, &cfg)?;
    Ok(bundle.vocoder.vocode(&mel_out)?)
}

/// The model portion of conversion, stopping at the generated mel.
/// Streaming uses this so it can trim context frames before vocoding.
pub(crate) fn convert_to_mel<T: Scalar>(
    bundle: &ModelBundle<T>,
    audio: &AudioBuffer,
    profile: &VoiceProfile,
    cfg: &DspConfig,
) -> Result<MelSpectrogram, PipelineError> {
    let mel = mel_spectrogram(audio, cfg)?;
    let conditioned = bundle.stp.is_conditioned();
    let ph = bundle
        .stp
        .forward(&mel, conditioned.then_some(&profile.accent))?;

    let t_out = 4 * ph.frames.shape()[0];
    let mut pitch = extract_pitch(audio, cfg, PITCH_F0_MIN, PITCH_F0_MAX)?;
    profile.apply_pitch_policy(&mut pitch);
    let pitch = pitch.resized(t_out);

    let mel_tensor = bundle.sts.forward(
        &ph,
        conditioned.then_some(&profile.accent),
        conditioned.then_some(&profile.gender),
        &profile.speaker,
        &pitch,
    )?;
    Ok(MelSpectrogram::from_tensor(&mel_tensor, *cfg)?)
}
