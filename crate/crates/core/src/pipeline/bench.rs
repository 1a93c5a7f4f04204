//! Latency benchmark: one warmup conversion, then timed iterations.
//!
//! Reported twice — with the profile precomputed and with profile
//! extraction inside the loop — since "generation latency" can be read
//! either way. Published absolute numbers are hardware-specific and are
//! not a target here.

use std::time::Instant;

use crate::autodiff::Scalar;
use crate::dsp::AudioBuffer;
use crate::models::ModelBundle;

use super::convert::{convert, profile_from_audio};
use super::{LatencyReport, PipelineError};

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    /// Embeddings computed once before timing starts.
    pub profile_precomputed: LatencyReport,
    /// Embedding extraction included in every iteration.
    pub with_profile_extraction: LatencyReport,
}

pub fn benchmark<T: Scalar>(
    bundle: &ModelBundle<T>,
    audio: &AudioBuffer,
    iterations: usize,
) -> Result<BenchmarkReport, PipelineError> {
    assert!(iterations >= 1, "benchmark needs at least one iteration");
    let audio_seconds = audio.duration_seconds();
    let profile = profile_from_audio(bundle, audio)?;

    // warmup iteration, discarded
    let _ = convert(bundle, audio, Some(&profile))?;

    let mut precomputed = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let start = Instant::now();
        let _ = convert(bundle, audio, Some(&profile))?;
        precomputed.push(start.elapsed().as_secs_f64() * 1000.0);
    }

    let mut with_profile = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let start = Instant::now();
        let _ = convert(bundle, audio, None)?;
        with_profile.push(start.elapsed().as_secs_f64() * 1000.0);
    }

    Ok(BenchmarkReport {
        profile_precomputed: LatencyReport::from_latencies(precomputed, audio_seconds),
        with_profile_extraction: LatencyReport::from_latencies(with_profile, audio_seconds),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Preset;

    #[test]
    fn single_iteration_degenerate_percentiles() {
        let bundle = ModelBundle::<f32>::new(Preset::toy(), 2, false, 5);
        let audio = AudioBuffer::sine(185.0, 0.4, 0.5, 22050);
        let report = benchmark(&bundle, &audio, 1).unwrap();
        let r = &report.profile_precomputed;
        assert_eq!(r.iterations, 1);
        assert_eq!(r.p50_ms, r.latencies_ms[0]);
        assert_eq!(r.p95_ms, r.latencies_ms[0]);
        // internal consistency: rtfx equals audio over wall from its samples
        let wall_s: f64 = r.latencies_ms.iter().sum::<f64>() / 1000.0;
        let expect = 0.4 * r.iterations as f64 / wall_s;
        assert!((r.rtfx - expect).abs() / expect < 1e-9);
    }
}
