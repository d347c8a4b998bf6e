//! The binary feature container: a 28-byte little-endian header followed by
//! a raw `[channel][band][frame]` payload in IEEE single or double precision.
//!
//! Header layout (all little-endian):
//!
//! | bytes  | field       | value                              |
//! |--------|-------------|------------------------------------|
//! | 0..4   | magic       | `EFEA`                             |
//! | 4..6   | version     | u16, currently 1                   |
//! | 6..8   | flags       | u16, bit 0 set = f64 payload       |
//! | 8..12  | n_channels  | u32                                |
//! | 12..16 | n_bands     | u32                                |
//! | 16..20 | n_frames    | u32                                |
//! | 20..24 | frame_hop   | u32, samples between frames        |
//! | 24..28 | sample_rate | u32, Hz                            |

use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::FeatureMap;
use crate::Sample;

pub const MAGIC: &[u8; 4] = b"EFEA";
pub const VERSION: u16 = 1;
const FLAG_DOUBLE: u16 = 1;
const HEADER_LEN: usize = 28;

/// A decoded feature file in whichever precision it was stored.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyFeatureMap {
    Single(FeatureMap<f32>),
    Double(FeatureMap<f64>),
}

impl AnyFeatureMap {
    pub fn is_double(&self) -> bool {
        matches!(self, AnyFeatureMap::Double(_))
    }

    /// (channels, bands, frames).
    pub fn shape(&self) -> (usize, usize, usize) {
        match self {
            AnyFeatureMap::Single(m) => (m.channels, m.bands, m.frames),
            AnyFeatureMap::Double(m) => (m.channels, m.bands, m.frames),
        }
    }

    /// Widens to `f64` for analysis, cloning in the narrow case.
    pub fn into_double(self) -> FeatureMap<f64> {
        match self {
            AnyFeatureMap::Double(m) => m,
            AnyFeatureMap::Single(m) => FeatureMap {
                data: m.data.iter().map(|&v| v as f64).collect(),
                batch: m.batch,
                channels: m.channels,
                bands: m.bands,
                frames: m.frames,
                frame_hop: m.frame_hop,
                sample_rate: m.sample_rate,
            },
        }
    }
}

fn u32_field(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value)
        .map_err(|_| Error::Shape(format!("{what} {value} does not fit the 32-bit header field")))
}

/// Serializes a single-item feature map. The payload precision follows the
/// map's sample type.
pub fn encode_features<S: Sample>(map: &FeatureMap<S>) -> Result<Vec<u8>> {
    if map.batch != 1 {
        return Err(Error::Shape(format!(
            "feature files hold a single item; batch is {}",
            map.batch
        )));
    }
    let elem_size = if S::DOUBLE { 8 } else { 4 };
    let mut out = Vec::with_capacity(HEADER_LEN + map.data.len() * elem_size);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let flags: u16 = if S::DOUBLE { FLAG_DOUBLE } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&u32_field(map.channels, "channel count")?.to_le_bytes());
    out.extend_from_slice(&u32_field(map.bands, "band count")?.to_le_bytes());
    out.extend_from_slice(&u32_field(map.frames, "frame count")?.to_le_bytes());
    out.extend_from_slice(&u32_field(map.frame_hop, "frame hop")?.to_le_bytes());
    out.extend_from_slice(&map.sample_rate.to_le_bytes());
    for &v in &map.data {
        if S::DOUBLE {
            out.extend_from_slice(&v.to_f64().unwrap().to_le_bytes());
        } else {
            out.extend_from_slice(&(v.to_f64().unwrap() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes a feature file image, in either precision.
pub fn decode_features(bytes: &[u8]) -> Result<AnyFeatureMap> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Parse {
            offset: bytes.len(),
            detail: format!("file ends inside the {HEADER_LEN}-byte header"),
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            detail: format!(
                "expected magic {:?}, found {:?}",
                String::from_utf8_lossy(MAGIC),
                String::from_utf8_lossy(&bytes[0..4])
            ),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Parse {
            offset: 4,
            detail: format!("unsupported version {version} (expected {VERSION})"),
        });
    }
    let flags = u16::from_le_bytes([bytes[6], bytes[7]]);
    if flags & !FLAG_DOUBLE != 0 {
        return Err(Error::Parse {
            offset: 6,
            detail: format!("unknown flag bits {:#06x}", flags & !FLAG_DOUBLE),
        });
    }
    let double = flags & FLAG_DOUBLE != 0;
    let dim = |off: usize| -> usize {
        u32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]) as usize
    };
    let (channels, bands, frames) = (dim(8), dim(12), dim(16));
    let frame_hop = dim(20);
    let sample_rate = dim(24) as u32;
    let elems = channels
        .checked_mul(bands)
        .and_then(|v| v.checked_mul(frames))
        .ok_or(Error::Parse {
            offset: 8,
            detail: "header dimensions overflow".into(),
        })?;
    let elem_size = if double { 8 } else { 4 };
    let expected = elems * elem_size;
    let actual = bytes.len() - HEADER_LEN;
    if actual != expected {
        return Err(Error::Parse {
            offset: HEADER_LEN,
            detail: format!(
                "payload holds {actual} bytes but {channels}x{bands}x{frames} \
                 {} features need {expected}",
                if double { "f64" } else { "f32" }
            ),
        });
    }
    let payload = &bytes[HEADER_LEN..];
    if double {
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(AnyFeatureMap::Double(FeatureMap {
            data,
            batch: 1,
            channels,
            bands,
            frames,
            frame_hop,
            sample_rate,
        }))
    } else {
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(AnyFeatureMap::Single(FeatureMap {
            data,
            batch: 1,
            channels,
            bands,
            frames,
            frame_hop,
            sample_rate,
        }))
    }
}

/// Writes a feature file atomically.
pub fn write_features<S: Sample>(path: &Path, map: &FeatureMap<S>) -> Result<()> {
    super::write_atomic(path, &encode_features(map)?)
}

/// Reads a feature file in either precision.
pub fn read_features(path: &Path) -> Result<AnyFeatureMap> {
    decode_features(&std::fs::read(path)?)
}
