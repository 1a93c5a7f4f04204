//! RIFF/WAVE read and write: PCM16 little-endian and IEEE float32,
//! mono or multi-channel (channels are averaged to mono on load).

use std::io::Read;
use std::path::Path;

use super::{AudioBuffer, DspError};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

/// Load a WAV file as a mono buffer normalized to [-1, 1].
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, DspError> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    let mut file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            DspError::MissingFile(path.display().to_string())
        } else {
            DspError::Io(e)
        }
    })?;
    file.read_to_end(&mut bytes)?;
    parse_wav(&bytes)
}

fn parse_wav(bytes: &[u8]) -> Result<AudioBuffer, DspError> {
    let header = |msg: &str| DspError::MalformedHeader(msg.to_string());
    if bytes.len() < 12 {
        return Err(header("file shorter than RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(header("missing RIFF magic"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(header("missing WAVE form type"));
    }

    let mut pos = 12usize;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        if body_start + size > bytes.len() {
            return Err(header("chunk size exceeds file length"));
        }
        let body = &bytes[body_start..body_start + size];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(header("fmt chunk too short"));
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word-aligned
        pos = body_start + size + (size & 1);
    }

    let (format, channels, rate, bits) = fmt.ok_or_else(|| header("missing fmt chunk"))?;
    let data = data.ok_or_else(|| header("missing data chunk"))?;
    if channels == 0 {
        return Err(header("zero channels"));
    }
    if rate == 0 {
        return Err(header("zero sample rate"));
    }

    let samples = match (format, bits) {
        (FORMAT_PCM, 16) => decode_pcm16(data, channels as usize),
        (FORMAT_IEEE_FLOAT, 32) => decode_f32(data, channels as usize),
        _ => {
            return Err(DspError::UnsupportedEncoding(format!(
                "format tag {format}, {bits} bits per sample"
            )))
        }
    };
    Ok(AudioBuffer::new(samples, rate))
}

fn decode_pcm16(data: &[u8], channels: usize) -> Vec<f64> {
    let frame_bytes = 2 * channels;
    let n_frames = data.len() / frame_bytes;
    let mut out = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let mut acc = 0.0f64;
        for c in 0..channels {
            let o = f * frame_bytes + c * 2;
            let v = i16::from_le_bytes([data[o], data[o + 1]]);
            acc += v as f64 / 32768.0;
        }
        out.push(acc / channels as f64);
    }
    out
}

fn decode_f32(data: &[u8], channels: usize) -> Vec<f64> {
    let frame_bytes = 4 * channels;
    let n_frames = data.len() / frame_bytes;
    let mut out = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let mut acc = 0.0f64;
        for c in 0..channels {
            let o = f * frame_bytes + c * 4;
            let v = f32::from_le_bytes([data[o], data[o + 1], data[o + 2], data[o + 3]]);
            acc += v as f64;
        }
        out.push(acc / channels as f64);
    }
    out
}

/// Write a mono buffer as PCM16 little-endian.
pub fn save_wav(audio: &AudioBuffer, path: impl AsRef<Path>) -> Result<(), DspError> {
    let n = audio.samples.len();
    let data_bytes = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_bytes).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&audio.sample_rate.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_bytes.to_le_bytes());
    for &s in &audio.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_pcm16(path: &std::path::Path, channels: u16, rate: u32, frames: &[Vec<i16>]) {
        let mut out = Vec::new();
        let data_bytes = (frames.len() * channels as usize * 2) as u32;
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_bytes).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * channels as u32 * 2).to_le_bytes());
        out.extend_from_slice(&(channels * 2).to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_bytes.to_le_bytes());
        for frame in frames {
            for &v in frame {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::write(path, out).unwrap();
    }

    #[test]
    fn one_second_pcm16_mono() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tone.wav");
        let frames: Vec<Vec<i16>> = (0..22050).map(|i| vec![(i % 100) as i16]).collect();
        write_pcm16(&path, 1, 22050, &frames);
        let audio = load_wav(&path).unwrap();
        assert_eq!(audio.len(), 22050);
        assert_eq!(audio.sample_rate, 22050);
    }

    #[test]
    fn stereo_identical_channels_average_to_either() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let frames: Vec<Vec<i16>> = (0..100).map(|i| vec![i as i16 * 10, i as i16 * 10]).collect();
        write_pcm16(&path, 2, 16000, &frames);
        let audio = load_wav(&path).unwrap();
        assert_eq!(audio.len(), 100);
        for (i, &s) in audio.samples.iter().enumerate() {
            assert!((s - (i as f64 * 10.0) / 32768.0).abs() < 1e-12);
        }
    }

    #[test]
    fn truncated_header_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.wav");
        std::fs::write(&path, b"RIFF\x10\x00").unwrap();
        match load_wav(&path) {
            Err(DspError::MalformedHeader(_)) => {}
            other => panic!("expected MalformedHeader, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_distinct() {
        match load_wav("/nonexistent/nowhere.wav") {
            Err(DspError::MissingFile(_)) => {}
            other => panic!("expected MissingFile, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_encoding_is_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alaw.wav");
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&6u16.to_le_bytes()); // a-law
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&8000u32.to_le_bytes());
        out.extend_from_slice(&8000u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&8u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&0u32.to_le_bytes());
        std::fs::write(&path, out).unwrap();
        match load_wav(&path) {
            Err(DspError::UnsupportedEncoding(_)) => {}
            other => panic!("expected UnsupportedEncoding, got {other:?}"),
        }
    }

    #[test]
    fn save_load_roundtrip_is_close() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.wav");
        let audio = AudioBuffer::sine(440.0, 0.05, 0.5, 22050);
        save_wav(&audio, &path).unwrap();
        let back = load_wav(&path).unwrap();
        assert_eq!(back.len(), audio.len());
        for (a, b) in audio.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1.0 / 32000.0);
        }
    }
}
