//! File formats: WAV audio input, the binary feature container, and PGM
//! rendering of feature maps.
//!
//! All writers go through an atomic temp-file-plus-rename so a crash or
//! full disk never leaves a truncated file at the target path.

use std::path::Path;

use crate::error::{Error, Result};

pub mod features;
pub mod pgm;
pub mod wav;

/// Writes `bytes` to `path` via a temporary file in the same directory,
/// renamed into place once fully written.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Argument(format!("'{}' has no file name", path.display())))?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        name.to_string_lossy(),
        std::process::id()
    ));
    std::fs::write(&tmp, bytes)?;
    if let Err(e) = std::fs::rename(&tmp, path) {
        let _ = std::fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}
