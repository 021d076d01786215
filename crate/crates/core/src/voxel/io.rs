//! `{name}.mask.json` sidecar plus `{name}.raw` (u8, x-fastest) blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{VoxelError, VoxelMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskHeader {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub origin_mm: [f64; 3],
    pub dtype: String,
    /// Raw file path, relative to the sidecar's directory.
    pub data_file: String,
}

/// Loads a mask from its JSON sidecar.
pub fn load_mask(sidecar: impl AsRef<Path>) -> Result<VoxelMask, VoxelError> {
    let sidecar = sidecar.as_ref();
    let header: MaskHeader = serde_json::from_slice(&fs::read(sidecar)?)?;
    if header.dtype != "u8" {
        return Err(VoxelError::Format(format!(
            "unsupported dtype {:?} (only \"u8\")",
            header.dtype
        )));
    }
    let dir = sidecar.parent().unwrap_or(Path::new("."));
    let raw = fs::read(dir.join(&header.data_file))?;
    let n: usize = header.dims.iter().product();
    if raw.len() != n {
        return Err(VoxelError::Format(format!(
            "{} holds {} bytes, dims require {n}",
            header.data_file,
            raw.len()
        )));
    }
    VoxelMask::new(
        header.dims,
        header.spacing_mm,
        header.origin_mm,
        raw.into_iter().map(f64::from).collect(),
    )
}

/// Writes `{dir}/{name}.mask.json` and `{dir}/{name}.raw`. Values are
/// rounded and clamped to u8. Returns the sidecar path.
pub fn save_mask(mask: &VoxelMask, dir: impl AsRef<Path>, name: &str) -> Result<PathBuf, VoxelError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let data_file = format!("{name}.raw");
    let bytes: Vec<u8> = mask
        .values()
        .iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    fs::write(dir.join(&data_file), bytes)?;
    let header = MaskHeader {
        dims: mask.dims(),
        spacing_mm: mask.spacing(),
        origin_mm: mask.origin(),
        dtype: "u8".into(),
        data_file,
    };
    let sidecar = dir.join(format!("{name}.mask.json"));
    fs::write(&sidecar, serde_json::to_string_pretty(&header)?)?;
    Ok(sidecar)
}
