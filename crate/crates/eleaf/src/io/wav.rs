//! Minimal RIFF/WAVE reader and writer: strictly mono, 16-bit PCM or 32-bit
//! IEEE float, which is all the pipeline consumes. Parse errors carry the
//! byte offset of the offending field and say what was expected.

use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::AudioBatch;

fn need(bytes: &[u8], offset: usize, len: usize, what: &str) -> Result<()> {
    if offset + len > bytes.len() {
        return Err(Error::Parse {
            offset: bytes.len(),
            detail: format!("file ends before {what} at byte {offset}"),
        });
    }
    Ok(())
}

fn u16_at(bytes: &[u8], offset: usize, what: &str) -> Result<u16> {
    need(bytes, offset, 2, what)?;
    Ok(u16::from_le_bytes([bytes[offset], bytes[offset + 1]]))
}

fn u32_at(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    need(bytes, offset, 4, what)?;
    Ok(u32::from_le_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parses a WAVE file image into a single-item audio batch. 16-bit PCM is
/// scaled by 1/32768; 32-bit float is taken as-is.
pub fn parse_wav(bytes: &[u8]) -> Result<AudioBatch<f64>> {
    need(bytes, 0, 12, "the RIFF header")?;
    if &bytes[0..4] != b"RIFF" {
        return Err(Error::Parse {
            offset: 0,
            detail: format!(
                "expected RIFF signature, found {:?}",
                String::from_utf8_lossy(&bytes[0..4])
            ),
        });
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(Error::Parse {
            offset: 8,
            detail: format!(
                "expected WAVE form type, found {:?}",
                String::from_utf8_lossy(&bytes[8..12])
            ),
        });
    }
    let mut cursor = 12usize;
    let mut fmt: Option<(usize, u16, u16, u32, u16)> = None; // offset, format, channels, rate, bits
    let mut data: Option<(usize, usize)> = None; // offset, len
    while cursor + 8 <= bytes.len() {
        let id = &bytes[cursor..cursor + 4];
        let size = u32_at(bytes, cursor + 4, "a chunk size")? as usize;
        let body = cursor + 8;
        if body + size > bytes.len() {
            return Err(Error::Parse {
                offset: cursor + 4,
                detail: format!(
                    "chunk {:?} claims {size} bytes but only {} remain",
                    String::from_utf8_lossy(id),
                    bytes.len() - body
                ),
            });
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Parse {
                        offset: cursor + 4,
                        detail: format!("fmt chunk needs at least 16 bytes, found {size}"),
                    });
                }
                fmt = Some((
                    body,
                    u16_at(bytes, body, "the audio format")?,
                    u16_at(bytes, body + 2, "the channel count")?,
                    u32_at(bytes, body + 4, "the sample rate")?,
                    u16_at(bytes, body + 14, "the bit depth")?,
                ));
            }
            b"data" => data = Some((body, size)),
            _ => {}
        }
        cursor = body + size + (size & 1);
    }
    let (fmt_off, format, channels, sample_rate, bits) = fmt.ok_or(Error::Parse {
        offset: 12,
        detail: "no fmt chunk found".into(),
    })?;
    let (data_off, data_len) = data.ok_or(Error::Parse {
        offset: 12,
        detail: "no data chunk found".into(),
    })?;
    if channels != 1 {
        return Err(Error::Parse {
            offset: fmt_off + 2,
            detail: format!("expected 1 channel (mono), found {channels}"),
        });
    }
    let payload = &bytes[data_off..data_off + data_len];
    let samples: Vec<f64> = match (format, bits) {
        (1, 16) => {
            if data_len % 2 != 0 {
                return Err(Error::Parse {
                    offset: data_off,
                    detail: format!("16-bit PCM data length {data_len} is not a whole number of samples"),
                });
            }
            payload
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                .collect()
        }
        (3, 32) => {
            if data_len % 4 != 0 {
                return Err(Error::Parse {
                    offset: data_off,
                    detail: format!("32-bit float data length {data_len} is not a whole number of samples"),
                });
            }
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect()
        }
        _ => {
            return Err(Error::Parse {
                offset: fmt_off,
                detail: format!(
                    "expected 16-bit PCM (format 1) or 32-bit float (format 3), \
                     found format {format} with {bits} bits"
                ),
            })
        }
    };
    AudioBatch::from_mono(samples, sample_rate)
}

/// Reads a mono WAVE file.
pub fn read_wav(path: &Path) -> Result<AudioBatch<f64>> {
    let bytes = std::fs::read(path)?;
    parse_wav(&bytes)
}

/// Serializes a single-item batch as mono 16-bit PCM. Samples are clamped to
/// [-1, 1] and scaled by 32767.
pub fn encode_wav(audio: &AudioBatch<f64>) -> Result<Vec<u8>> {
    if audio.batch != 1 {
        return Err(Error::Shape(format!(
            "WAV files hold one clip; batch is {}",
            audio.batch
        )));
    }
    let data_len = audio.time * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&audio.sample_rate.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &v in &audio.samples {
        let q = (v.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    Ok(out)
}

/// Writes a mono 16-bit PCM WAVE file atomically.
pub fn write_wav(path: &Path, audio: &AudioBatch<f64>) -> Result<()> {
    super::write_atomic(path, &encode_wav(audio)?)
}
