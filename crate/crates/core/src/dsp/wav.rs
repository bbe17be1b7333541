//! RIFF/WAVE PCM16 reader and writer.

use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};
use crate::io::write_atomic;

const FORMAT_PCM: u16 = 1;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

fn wav_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Wav(msg.into()))
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

struct Format {
    channels: u16,
    sample_rate: u32,
}

fn parse_fmt(body: &[u8]) -> Result<Format> {
    if body.len() < 16 {
        return wav_err("fmt chunk shorter than 16 bytes");
    }
    let mut tag = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let sample_rate = u32_at(body, 4);
    let bits = u16_at(body, 14);
    if tag == FORMAT_EXTENSIBLE {
        if body.len() < 26 {
            return wav_err("extensible fmt chunk is truncated");
        }
        tag = u16_at(body, 24);
    }
    if tag != FORMAT_PCM {
        return wav_err(format!("unsupported codec: format tag {tag:#x} (only PCM is supported)"));
    }
    if bits != 16 {
        return wav_err(format!("unsupported codec: {bits}-bit PCM (only 16-bit is supported)"));
    }
    if channels == 0 {
        return wav_err("fmt chunk declares zero channels");
    }
    if sample_rate == 0 {
        return wav_err("fmt chunk declares a zero sample rate");
    }
    Ok(Format { channels, sample_rate })
}

/// Decodes PCM16 WAV bytes. Multi-channel input is downmixed by averaging.
pub fn read_wav_bytes(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return wav_err("malformed header: not a RIFF/WAVE file");
    }
    let mut fmt = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        if id == b"fmt " {
            if body_start + size > bytes.len() {
                return wav_err("malformed header: truncated fmt chunk");
            }
            fmt = Some(parse_fmt(&bytes[body_start..body_start + size])?);
        } else if id == b"data" {
            let Some(fmt) = fmt else {
                return wav_err("malformed header: data chunk before fmt chunk");
            };
            if body_start + size > bytes.len() {
                return wav_err("truncated data chunk");
            }
            let frame = 2 * fmt.channels as usize;
            if size < frame {
                return wav_err("zero-length data");
            }
            let data = &bytes[body_start..body_start + size - size % frame];
            let ch = fmt.channels as usize;
            let samples = data
                .chunks_exact(frame)
                .map(|f| {
                    let sum: f32 = f
                        .chunks_exact(2)
                        .map(|s| i16::from_le_bytes([s[0], s[1]]) as f32 / 32768.0)
                        .sum();
                    sum / ch as f32
                })
                .collect();
            return Waveform::new(samples, fmt.sample_rate);
        }
        pos = body_start + size + (size & 1);
    }
    if fmt.is_none() {
        wav_err("malformed header: missing fmt chunk")
    } else {
        wav_err("malformed header: missing data chunk")
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_wav_bytes(&bytes).map_err(|e| match e {
        Error::Wav(m) => Error::Wav(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// PCM16 mono encoding; samples are clamped to `[-1, 1]` and scaled by 32768.
pub fn wav_bytes(w: &Waveform) -> Vec<u8> {
    let n = w.len();
    let data_len = (2 * n) as u32;
    let mut out = Vec::with_capacity(44 + 2 * n);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate().to_le_bytes());
    out.extend_from_slice(&(w.sample_rate() * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in w.samples() {
        let q = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    write_atomic(path.as_ref(), &wav_bytes(w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(n: usize, f: f32) -> Waveform {
        let s = (0..n)
            .map(|i| 0.8 * (2.0 * std::f32::consts::PI * f * i as f32 / 16000.0).sin())
            .collect();
        Waveform::new(s, 16000).unwrap()
    }

    #[test]
    fn round_trip_within_one_lsb() {
        let w = sine(16000, 440.0);
        let back = read_wav_bytes(&wav_bytes(&w)).unwrap();
        assert_eq!(back.sample_rate(), 16000);
        assert_eq!(back.len(), w.len());
        let worst = w
            .samples()
            .iter()
            .zip(back.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max);
        assert!(worst <= 1.0 / 32768.0, "{worst}");
    }

    #[test]
    fn ten_seconds_is_160000_samples() {
        let w = Waveform::new(vec![0.1; 160_000], 16000).unwrap();
        let back = read_wav_bytes(&wav_bytes(&w)).unwrap();
        assert_eq!(back.len(), 160_000);
        assert!((back.duration_s() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_data_is_reported() {
        let mut b = wav_bytes(&sine(100, 440.0));
        b.truncate(b.len() - 10);
        let err = read_wav_bytes(&b).unwrap_err().to_string();
        assert!(err.contains("truncated data chunk"), "{err}");
    }

    #[test]
    fn malformed_and_unsupported_inputs() {
        assert!(read_wav_bytes(b"RIFX0000WAVE").unwrap_err().to_string().contains("malformed header"));
        let mut b = wav_bytes(&sine(10, 440.0));
        b[20] = 3; // IEEE float tag
        assert!(read_wav_bytes(&b).unwrap_err().to_string().contains("unsupported codec"));
        let empty = Waveform::new(vec![0.0], 16000).unwrap();
        let mut b = wav_bytes(&empty);
        b[40..44].copy_from_slice(&0u32.to_le_bytes());
        b.truncate(44);
        assert!(read_wav_bytes(&b).unwrap_err().to_string().contains("zero-length data"));
    }

    #[test]
    fn stereo_is_downmixed() {
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&(36u32 + 8).to_le_bytes());
        b.extend_from_slice(b"WAVEfmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&2u16.to_le_bytes());
        b.extend_from_slice(&16000u32.to_le_bytes());
        b.extend_from_slice(&64000u32.to_le_bytes());
        b.extend_from_slice(&4u16.to_le_bytes());
        b.extend_from_slice(&16u16.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&8u32.to_le_bytes());
        for s in [16384i16, 0, -16384, -16384] {
            b.extend_from_slice(&s.to_le_bytes());
        }
        let w = read_wav_bytes(&b).unwrap();
        assert_eq!(w.samples(), &[0.25, -0.5]);
    }
}
