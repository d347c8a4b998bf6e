//! Renders one (item, channel) plane of a feature map as a binary PGM (P5)
//! image: one column per frame, one row per band, band 0 on the bottom row,
//! values min-max scaled to 0..=255. A constant plane renders mid-gray.

use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::FeatureMap;
use crate::Sample;

/// Renders the plane to PGM bytes.
pub fn render_pgm<S: Sample>(map: &FeatureMap<S>, item: usize, channel: usize) -> Result<Vec<u8>> {
    if item >= map.batch || channel >= map.channels {
        return Err(Error::Argument(format!(
            "item {item}, channel {channel} out of range for a {}x{} map",
            map.batch, map.channels
        )));
    }
    if map.bands == 0 || map.frames == 0 {
        return Err(Error::Shape("cannot render an empty feature map".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for band in 0..map.bands {
        for &v in map.band(item, channel, band) {
            let v = v.to_f64().unwrap();
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let header = format!("P5\n{} {}\n255\n", map.frames, map.bands);
    let mut out = Vec::with_capacity(header.len() + map.bands * map.frames);
    out.extend_from_slice(header.as_bytes());
    let flat = hi <= lo || !lo.is_finite() || !hi.is_finite();
    for y in 0..map.bands {
        let band = map.bands - 1 - y;
        for &v in map.band(item, channel, band) {
            let px = if flat {
                128
            } else {
                let t = (v.to_f64().unwrap() - lo) / (hi - lo);
                (t * 255.0).round().clamp(0.0, 255.0) as u8
            };
            out.push(px);
        }
    }
    Ok(out)
}

/// Renders and writes the plane atomically.
pub fn write_pgm<S: Sample>(
    path: &Path,
    map: &FeatureMap<S>,
    item: usize,
    channel: usize,
) -> Result<()> {
    super::write_atomic(path, &render_pgm(map, item, channel)?)
}
