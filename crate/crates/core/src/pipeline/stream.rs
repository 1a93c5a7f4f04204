//! Chunked streaming conversion.
//!
//! Chunks are processed independently with optional left context whose
//! output frames are discarded. Execution is a staged pipeline — model
//! forward, then vocoding — connected by bounded single-slot channels,
//! so at most one chunk is in flight per stage and ordering is preserved
//! end to end. The profile is fixed before streaming starts.
//!
//! Emitted chunks are trimmed to their own frame count so concatenated
//! output tracks input duration within one hop per chunk; the final chunk
//! keeps its subsample-rounding tail, which makes a single-chunk stream
//! bit-identical to whole-utterance conversion.

use std::sync::mpsc;
use std::time::Instant;

use crate::autodiff::Scalar;
use crate::dsp::{AudioBuffer, DspConfig, MelSpectrogram};
use crate::models::{MelVocoder, ModelBundle};

use super::convert::{convert_to_mel, profile_from_audio};
use super::{LatencyReport, PipelineError, ProfileSource, StreamConfig};

type StageResult<V> = Result<V, PipelineError>;

pub fn stream_convert<T: Scalar>(
    bundle: &ModelBundle<T>,
    chunks: &[AudioBuffer],
    cfg: &StreamConfig,
) -> Result<(Vec<AudioBuffer>, LatencyReport), PipelineError> {
    let dsp = DspConfig::default();
    if chunks.is_empty() {
        return Err(PipelineError::NoChunks);
    }
    cfg.validate(dsp.hop_size, dsp.sample_rate)?;
    for (index, chunk) in chunks.iter().enumerate() {
        if chunk.sample_rate != dsp.sample_rate {
            return Err(PipelineError::WrongSampleRate {
                expected: dsp.sample_rate,
                got: chunk.sample_rate,
            });
        }
        if chunk.len() < dsp.hop_size {
            return Err(PipelineError::ChunkTooShort {
                index,
                samples: chunk.len(),
                hop: dsp.hop_size,
            });
        }
    }

    let profile = match &cfg.profile_source {
        ProfileSource::FirstChunk => profile_from_audio(bundle, &chunks[0])?,
        ProfileSource::Enrollment(clip) => profile_from_audio(bundle, clip)?,
    };

    let hop = dsp.hop_size;
    let ctx_limit = cfg.left_context_frames * hop;
    let n_chunks = chunks.len();
    let stream_start = Instant::now();

    let (model_tx, model_rx) = mpsc::sync_channel::<StageResult<(usize, Instant, MelSpectrogram)>>(1);
    let (out_tx, out_rx) = mpsc::sync_channel::<StageResult<(usize, Instant, AudioBuffer)>>(1);

    let mut outputs: Vec<Option<AudioBuffer>> = vec![None; n_chunks];
    let mut latencies_ms = Vec::with_capacity(n_chunks);

    std::thread::scope(|scope| -> Result<(), PipelineError> {
        let profile_ref = &profile;
        scope.spawn(move || {
            // model stage: mel analysis through spectrogram generation
            let mut history: Vec<f64> = Vec::new();
            for (i, chunk) in chunks.iter().enumerate() {
                let started = Instant::now();
                // whole hops of left context from previously seen input
                let ctx_samples = (history.len().min(ctx_limit) / hop) * hop;
                let mut combined =
                    Vec::with_capacity(ctx_samples + chunk.len());
                combined.extend_from_slice(&history[history.len() - ctx_samples..]);
                combined.extend_from_slice(&chunk.samples);
                let ctx_frames = ctx_samples / hop;
                let chunk_frames = chunk.len() / hop + 1;

                let buffer = AudioBuffer::new(combined, chunk.sample_rate);
                let result = convert_to_mel(bundle, &buffer, profile_ref, &dsp).map(|mel| {
                    let end = if i + 1 == n_chunks {
                        mel.n_frames()
                    } else {
                        ctx_frames + chunk_frames
                    };
                    (i, started, mel.frames_range(ctx_frames, end))
                });
                let failed = result.is_err();
                if model_tx.send(result).is_err() || failed {
                    return;
                }
                history.extend_from_slice(&chunk.samples);
                if history.len() > ctx_limit {
                    history.drain(..history.len() - ctx_limit);
                }
            }
        });

        let vocoder = &bundle.vocoder;
        scope.spawn(move || {
            // vocoder stage
            for item in model_rx {
                let result = item.and_then(|(i, started, mel)| {
                    let audio = vocoder.vocode(&mel)?;
                    Ok((i, started, audio))
                });
                let failed = result.is_err();
                if out_tx.send(result).is_err() || failed {
                    return;
                }
            }
        });

        for item in out_rx {
            let (i, started, audio) = item?;
            latencies_ms.push(started.elapsed().as_secs_f64() * 1000.0);
            outputs[i] = Some(audio);
        }
        Ok(())
    })?;

    let total_wall_s = stream_start.elapsed().as_secs_f64();
    let outputs: Vec<AudioBuffer> = outputs
        .into_iter()
        .map(|o| o.expect("every chunk produced output"))
        .collect();
    let total_audio_s: f64 = chunks.iter().map(|c| c.duration_seconds()).sum();

    let mut report = LatencyReport::from_latencies(latencies_ms, total_audio_s / n_chunks as f64);
    // pipelined stages overlap, so RTFX uses the true end-to-end wall time
    report.rtfx = total_audio_s / total_wall_s;
    Ok((outputs, report))
}
