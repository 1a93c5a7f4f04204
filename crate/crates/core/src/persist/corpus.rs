//! Deterministic formant-synthesized corpus for desk-scale training.
//!
//! Each "speaker" is a fixed resonance set (base pitch and formant
//! positions), each "accent class" a systematic formant/duration shift,
//! and transcripts come from a small template grammar. Identical seeds
//! produce byte-identical corpora.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{save_wav, AudioBuffer};

use super::{write_manifest, ManifestRecord, PersistError};

#[derive(Debug, Clone, Copy)]
pub struct CorpusSpec {
    pub speakers: usize,
    pub accents: usize,
    pub utterances_per_pair: usize,
    pub sample_rate: u32,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            speakers: 2,
            accents: 2,
            utterances_per_pair: 2,
            sample_rate: 22050,
        }
    }
}

const SUBJECTS: [&str; 4] = ["we", "you", "he", "ana"];
const VERBS: [&str; 4] = ["go", "see", "ran", "dig"];
const TAILS: [&str; 4] = ["up", "out", "on", "in"];

struct Voice {
    f0: f64,
    formants: [f64; 3],
}

fn speaker_voice(speaker: usize, rng: &mut ChaCha8Rng) -> Voice {
    let jitter = |rng: &mut ChaCha8Rng| 1.0 + rng.gen_range(-0.02..0.02);
    Voice {
        f0: (105.0 + 48.0 * speaker as f64) * jitter(rng),
        formants: [
            (340.0 + 90.0 * speaker as f64) * jitter(rng),
            (1050.0 + 260.0 * speaker as f64) * jitter(rng),
            (2350.0 + 280.0 * speaker as f64) * jitter(rng),
        ],
    }
}

/// Accent shift: scale the formants, tilt the spectral balance toward
/// higher harmonics, and stretch durations.
fn accent_shift(accent: usize) -> (f64, f64, f64) {
    (
        1.0 + 0.16 * accent as f64,
        0.6 * accent as f64,
        1.0 + 0.12 * accent as f64,
    )
}

/// Per-character articulation targets: vowels move the first two formants,
/// consonants become short noise bursts.
fn char_targets(c: char) -> Option<(f64, f64)> {
    match c {
        'a' => Some((1.25, 0.95)),
        'e' => Some((1.0, 1.15)),
        'i' => Some((0.8, 1.3)),
        'o' => Some((1.1, 0.75)),
        'u' => Some((0.85, 0.7)),
        _ => None,
    }
}

fn synthesize_utterance(
    text: &str,
    voice: &Voice,
    accent: usize,
    rate: u32,
    rng: &mut ChaCha8Rng,
) -> AudioBuffer {
    let (formant_scale, tilt, duration_scale) = accent_shift(accent);
    let sr = rate as f64;
    let mut samples: Vec<f64> = Vec::new();
    let mut phase = vec![0.0f64; 24];
    for c in text.chars() {
        if c == ' ' {
            samples.extend(std::iter::repeat(0.0).take((0.04 * sr) as usize));
            continue;
        }
        let seg_len = ((0.085 * duration_scale + rng.gen_range(-0.005..0.005)) * sr) as usize;
        match char_targets(c) {
            Some((m1, m2)) => {
                // voiced vowel: harmonic series shaped by formant envelope
                let f1 = voice.formants[0] * m1 * formant_scale;
                let f2 = voice.formants[1] * m2 * formant_scale;
                let f3 = voice.formants[2] * formant_scale;
                let envelope = |f: f64| -> f64 {
                    let g = |center: f64, bw: f64| (-((f - center) / bw).powi(2)).exp();
                    let shape = g(f1, 200.0) + 0.7 * g(f2, 260.0) + 0.35 * g(f3, 380.0);
                    shape * (f / 800.0).powf(tilt)
                };
                let n_harm = ((sr / 2.0 - 200.0) / voice.f0) as usize;
                let amps: Vec<f64> = (1..=n_harm.min(24))
                    .map(|k| envelope(k as f64 * voice.f0))
                    .collect();
                for i in 0..seg_len {
                    let ramp = taper(i, seg_len);
                    let mut s = 0.0;
                    for (k, &a) in amps.iter().enumerate() {
                        let f = (k + 1) as f64 * voice.f0;
                        phase[k] += 2.0 * std::f64::consts::PI * f / sr;
                        s += a * phase[k].sin();
                    }
                    samples.push(s * ramp * 0.25);
                    let _ = i;
                }
            }
            None => {
                // unvoiced consonant: band-limited noise burst
                for i in 0..seg_len / 2 {
                    let ramp = taper(i, seg_len / 2);
                    samples.push(rng.gen_range(-0.08..0.08) * ramp);
                }
            }
        }
    }
    // trailing silence so every utterance ends cleanly
    samples.extend(std::iter::repeat(0.0).take((0.03 * sr) as usize));
    let peak = samples.iter().fold(0.0f64, |a, &s| a.max(s.abs()));
    if peak > 0.0 {
        let norm = 0.5 / peak;
        for s in &mut samples {
            *s *= norm;
        }
    }
    AudioBuffer::new(samples, rate)
}

fn taper(i: usize, len: usize) -> f64 {
    let fade = (len / 8).max(1);
    if i < fade {
        i as f64 / fade as f64
    } else if i + fade > len {
        (len - i) as f64 / fade as f64
    } else {
        1.0
    }
}

/// Generate WAV files plus `manifest.jsonl` under `out_dir`. A pure
/// function of `(spec, seed)`.
pub fn generate_synthetic_corpus(
    spec: &CorpusSpec,
    seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<ManifestRecord>, PersistError> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let voices: Vec<Voice> = (0..spec.speakers).map(|s| speaker_voice(s, &mut rng)).collect();

    let mut records = Vec::new();
    for speaker in 0..spec.speakers {
        for accent in 0..spec.accents {
            for utt in 0..spec.utterances_per_pair {
                let text = format!(
                    "{} {} {}",
                    SUBJECTS[rng.gen_range(0..SUBJECTS.len())],
                    VERBS[rng.gen_range(0..VERBS.len())],
                    TAILS[rng.gen_range(0..TAILS.len())],
                );
                let audio =
                    synthesize_utterance(&text, &voices[speaker], accent, spec.sample_rate, &mut rng);
                let filename = format!("spk{speaker}_acc{accent}_utt{utt}.wav");
                let path = out_dir.join(&filename);
                save_wav(&audio, &path)?;
                records.push(ManifestRecord {
                    audio_filepath: filename,
                    text,
                    accent: format!("accent{accent:02}"),
                    gender: if speaker % 2 == 0 { "f" } else { "m" }.into(),
                    speaker: format!("spk{speaker}"),
                    duration: audio.duration_seconds(),
                });
            }
        }
    }
    write_manifest(&records, out_dir.join("manifest.jsonl"))?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::load_wav;

    #[test]
    fn counts_match_the_spec() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CorpusSpec {
            speakers: 2,
            accents: 2,
            utterances_per_pair: 2,
            sample_rate: 22050,
        };
        let records = generate_synthetic_corpus(&spec, 7, dir.path()).unwrap();
        assert_eq!(records.len(), 8);
        for r in &records {
            let audio = load_wav(dir.path().join(&r.audio_filepath)).unwrap();
            assert!(audio.duration_seconds() > 0.3);
            assert!((audio.duration_seconds() - r.duration).abs() < 1e-6);
        }
        let manifest = super::super::parse_manifest(dir.path().join("manifest.jsonl")).unwrap();
        assert_eq!(manifest.len(), 8);
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let spec = CorpusSpec::default();
        let r1 = generate_synthetic_corpus(&spec, 99, d1.path()).unwrap();
        let r2 = generate_synthetic_corpus(&spec, 99, d2.path()).unwrap();
        assert_eq!(r1, r2);
        for r in &r1 {
            let b1 = std::fs::read(d1.path().join(&r.audio_filepath)).unwrap();
            let b2 = std::fs::read(d2.path().join(&r.audio_filepath)).unwrap();
            assert_eq!(b1, b2, "{}", r.audio_filepath);
        }
        assert_eq!(
            std::fs::read(d1.path().join("manifest.jsonl")).unwrap(),
            std::fs::read(d2.path().join("manifest.jsonl")).unwrap()
        );
    }

    #[test]
    fn accent_classes_have_distinct_spectral_centroids() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CorpusSpec {
            speakers: 2,
            accents: 2,
            utterances_per_pair: 3,
            sample_rate: 22050,
        };
        let records = generate_synthetic_corpus(&spec, 3, dir.path()).unwrap();
        // DFT-based spectral centroid averaged per accent class
        let centroid = |samples: &[f64]| -> f64 {
            let n = 4096.min(samples.len());
            let mut num = 0.0;
            let mut den = 0.0;
            for k in 1..n / 2 {
                let (mut re, mut im) = (0.0, 0.0);
                for i in 0..n {
                    let ph = -2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                    re += samples[i] * ph.cos();
                    im += samples[i] * ph.sin();
                }
                let mag = (re * re + im * im).sqrt();
                num += k as f64 * mag;
                den += mag;
            }
            num / den
        };
        let mut sums = [0.0f64; 2];
        let mut counts = [0usize; 2];
        for r in &records {
            let audio = load_wav(dir.path().join(&r.audio_filepath)).unwrap();
            // measure the loudest 4096-sample window
            let mut best = (0usize, -1.0f64);
            let mut start = 0;
            while start + 4096 <= audio.len() {
                let e: f64 = audio.samples[start..start + 4096].iter().map(|s| s * s).sum();
                if e > best.1 {
                    best = (start, e);
                }
                start += 2048;
            }
            let a: usize = r.accent[6..].parse().unwrap();
            sums[a] += centroid(&audio.samples[best.0..]);
            counts[a] += 1;
        }
        let m0 = sums[0] / counts[0] as f64;
        let m1 = sums[1] / counts[1] as f64;
        assert!(
            (m1 - m0) / m0 > 0.05,
            "accent classes not separated: {m0:.1} vs {m1:.1}"
        );
    }
}
