//! 16-bit PCM mono WAV in the canonical RIFF layout.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::Waveform;

pub fn decode_wav(bytes: &[u8], path: &Path) -> Result<Waveform> {
    let bad = |msg: &str| Error::format(path, msg.to_string());
    if bytes.len() < 12 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("not a RIFF/WAVE file"));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());

    let mut pos = 12;
    let mut sample_rate = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(pos + 4) as usize;
        let body = pos + 8;
        let end = body.checked_add(size).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated chunk"))?;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(bad("fmt chunk too short"));
                }
                let (format, channels, bits) = (u16_at(body), u16_at(body + 2), u16_at(body + 14));
                if format != 1 || channels != 1 || bits != 16 {
                    return Err(Error::format(
                        path,
                        format!("expected 16-bit PCM mono, got format {format}, {channels} channel(s), {bits} bits"),
                    ));
                }
                sample_rate = Some(u32_at(body + 4));
            }
            b"data" => {
                let sr = sample_rate.ok_or_else(|| bad("data chunk before fmt chunk"))?;
                let samples = bytes[body..end]
                    .chunks_exact(2)
                    .map(|c| f64::from(i16::from_le_bytes([c[0], c[1]])) / 32768.0)
                    .collect();
                return Waveform::new(samples, sr).map_err(|e| Error::format(path, e.to_string()));
            }
            _ => {}
        }
        // chunks are word-aligned
        pos = end + (size & 1);
    }
    Err(bad("no data chunk"))
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes, path)
}

pub fn encode_wav(w: &Waveform) -> Vec<u8> {
    let data_len = (w.samples().len() * 2) as u32;
    let sr = w.sample_rate();
    let mut b = Vec::with_capacity(44 + data_len as usize);
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(36 + data_len).to_le_bytes());
    b.extend_from_slice(b"WAVEfmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&sr.to_le_bytes());
    b.extend_from_slice(&(sr * 2).to_le_bytes());
    b.extend_from_slice(&2u16.to_le_bytes());
    b.extend_from_slice(&16u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&data_len.to_le_bytes());
    for &s in w.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        b.extend_from_slice(&q.to_le_bytes());
    }
    b
}

pub fn write_wav(w: &Waveform, path: &Path) -> Result<()> {
    fs::write(path, encode_wav(w)).map_err(|e| Error::io(path, e))
}
