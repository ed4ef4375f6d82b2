//! RIFF/WAVE reading (PCM16 and IEEE float32) and PCM16 writing.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_FLOAT: u16 = 0x0003;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Mono samples in [−1, 1] and their rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Data("sample rate must be positive".into()));
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Linear-interpolation resampling; identity when the rate already matches.
    pub fn resampled(&self, rate: u32) -> Result<AudioClip> {
        if rate == 0 {
            return Err(Error::Config("target sample rate must be positive".into()));
        }
        if rate == self.sample_rate || self.samples.is_empty() {
            return Ok(AudioClip { samples: self.samples.clone(), sample_rate: rate });
        }
        let ratio = self.sample_rate as f64 / rate as f64;
        let n = ((self.samples.len() as f64) / ratio).floor().max(1.0) as usize;
        let last = self.samples.len() - 1;
        let samples = (0..n)
            .map(|i| {
                let pos = i as f64 * ratio;
                let j = (pos.floor() as usize).min(last);
                let frac = pos - j as f64;
                let next = self.samples[(j + 1).min(last)];
                self.samples[j] * (1.0 - frac) + next * frac
            })
            .collect();
        Ok(AudioClip { samples, sample_rate: rate })
    }
}

fn codec_name(tag: u16) -> &'static str {
    match tag {
        FORMAT_PCM => "PCM",
        0x0002 => "MS ADPCM",
        FORMAT_FLOAT => "IEEE float",
        0x0006 => "A-law",
        0x0007 => "mu-law",
        0x0011 => "IMA ADPCM",
        0x0055 => "MPEG layer 3",
        FORMAT_EXTENSIBLE => "extensible",
        _ => "unknown",
    }
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

/// Decodes a WAV byte buffer, averaging channels to mono.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    let bad = |m: &str| Error::Data(format!("malformed WAV: {m}"));
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("missing RIFF/WAVE header"));
    }
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start.checked_add(len).ok_or_else(|| bad("chunk length overflow"))?;
        if body_end > bytes.len() {
            if id == b"data" {
                // Tolerate streams whose data length was never patched.
                data = Some(&bytes[body_start..]);
                break;
            }
            return Err(bad("chunk extends past end of file"));
        }
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(bad("fmt chunk shorter than 16 bytes"));
                }
                let mut tag = u16_at(body, 0);
                let bits = u16_at(body, 14);
                if tag == FORMAT_EXTENSIBLE {
                    if body.len() < 26 {
                        return Err(bad("extensible fmt chunk too short"));
                    }
                    tag = u16_at(body, 24);
                }
                fmt = Some((tag, u16_at(body, 2), u32_at(body, 4), bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos = body_end + (len & 1);
    }
    let (tag, channels, rate, bits) = fmt.ok_or_else(|| bad("no fmt chunk"))?;
    let data = data.ok_or_else(|| bad("no data chunk"))?;
    if channels == 0 {
        return Err(bad("zero channels"));
    }
    let decode: fn(&[u8]) -> f64 = match (tag, bits) {
        (FORMAT_PCM, 16) => |b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
        (FORMAT_FLOAT, 32) => |b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        _ => return Err(Error::UnsupportedFormat { tag, name: codec_name(tag), bits }),
    };
    let width = bits as usize / 8;
    let frame = width * channels as usize;
    let samples = data
        .chunks_exact(frame)
        .map(|f| f.chunks_exact(width).map(decode).sum::<f64>() / channels as f64)
        .collect();
    AudioClip::new(samples, rate)
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Mono PCM16 encoding with clipping to full scale.
pub fn encode_wav_pcm16(samples: &[f64], sample_rate: u32) -> Vec<u8> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write_wav_pcm16(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav_pcm16(samples, sample_rate)).map_err(|e| Error::io(path, e))
}
