use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{VoxelError, VoxelMask};
use crate::vec3::Vec3;

/// Axis-aligned cube (world frame) used to crop a region of interest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiSpec {
    /// Cube side length in mm.
    pub cube_side: f64,
    /// Cube center in world coordinates (mm).
    pub center: Vec3,
}

/// Mean world position of the nonzero voxel centers.
pub fn center_of_mass(mask: &VoxelMask) -> Result<Vec3, VoxelError> {
    let [nx, ny, nz] = mask.dims();
    let mut sum = [0.0f64; 3];
    let mut count = 0usize;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if mask.get(i, j, k) != 0.0 {
                    sum[0] += i as f64;
                    sum[1] += j as f64;
                    sum[2] += k as f64;
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(VoxelError::EmptyMask);
    }
    let o = mask.origin();
    let s = mask.spacing();
    let n = count as f64;
    Ok([
        o[0] + s[0] * sum[0] / n,
        o[1] + s[1] * sum[1] / n,
        o[2] + s[2] * sum[2] / n,
    ])
}

/// Union of vessels and lesion inside the cube, restricted to the
/// 26-connected components that touch the lesion. The result is a binary
/// mask on the cropped sub-grid (clamped to the volume).
pub fn extract_roi(
    vessels: &VoxelMask,
    lesion: &VoxelMask,
    spec: &RoiSpec,
) -> Result<VoxelMask, VoxelError> {
    vessels.same_grid(lesion)?;
    if !(spec.cube_side > 0.0) {
        return Err(VoxelError::InvalidGrid(format!(
            "cube side must be positive, got {}",
            spec.cube_side
        )));
    }
    if lesion.count_nonzero() == 0 {
        return Err(VoxelError::EmptyMask);
    }

    let dims = lesion.dims();
    let (o, s) = (lesion.origin(), lesion.spacing());
    let half = spec.cube_side / 2.0;
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let tol = 1e-9 * s[a];
        let first = ((spec.center[a] - half - o[a]) / s[a] - tol).ceil();
        let last = ((spec.center[a] + half - o[a]) / s[a] + tol).floor();
        let max = (dims[a] - 1) as f64;
        if last < 0.0 || first > max {
            return Err(VoxelError::InvalidGrid("ROI cube lies outside the volume".into()));
        }
        lo[a] = first.clamp(0.0, max) as usize;
        hi[a] = last.clamp(0.0, max) as usize;
    }
    let sub = [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1];
    let sub_index = |i: usize, j: usize, k: usize| i + sub[0] * (j + sub[1] * k);

    let n = sub[0] * sub[1] * sub[2];
    let mut occupied = vec![false; n];
    let mut is_lesion = vec![false; n];
    for k in 0..sub[2] {
        for j in 0..sub[1] {
            for i in 0..sub[0] {
                let (gi, gj, gk) = (i + lo[0], j + lo[1], k + lo[2]);
                let l = lesion.get(gi, gj, gk) != 0.0;
                let v = vessels.get(gi, gj, gk) != 0.0;
                let idx = sub_index(i, j, k);
                occupied[idx] = l || v;
                is_lesion[idx] = l;
            }
        }
    }

    // flood fill from every lesion voxel
    let mut keep = vec![false; n];
    let mut queue = VecDeque::new();
    for idx in 0..n {
        if is_lesion[idx] && !keep[idx] {
            keep[idx] = true;
            queue.push_back(idx);
        }
    }
    while let Some(idx) = queue.pop_front() {
        let i = idx % sub[0];
        let j = (idx / sub[0]) % sub[1];
        let k = idx / (sub[0] * sub[1]);
        for dk in -1i64..=1 {
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (ni, nj, nk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                    if ni < 0
                        || nj < 0
                        || nk < 0
                        || ni >= sub[0] as i64
                        || nj >= sub[1] as i64
                        || nk >= sub[2] as i64
                    {
                        continue;
                    }
                    let nidx = sub_index(ni as usize, nj as usize, nk as usize);
                    if occupied[nidx] && !keep[nidx] {
                        keep[nidx] = true;
                        queue.push_back(nidx);
                    }
                }
            }
        }
    }

    let origin = lesion.world(lo[0], lo[1], lo[2]);
    VoxelMask::new(
        sub,
        s,
        origin,
        keep.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect(),
    )
}
