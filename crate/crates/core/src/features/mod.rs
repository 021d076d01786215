//! Per-edge input channels: relative geometry, curvature descriptors and
//! optional midpoint coordinates.

mod curvature;
mod geometric;
mod normalize;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::Mesh;

pub use curvature::{shape_index_curvedness, vertex_curvatures, VertexCurvatures};
pub use geometric::{edge_midpoints, geometric_edge_features, vertex_to_edge};
pub use normalize::{apply_normalization, fit_normalization, FeatureNormStats};

/// Channels x edges.
pub type EdgeFeatureMatrix = Array2<f64>;

pub const CHANNEL_NAMES: [&str; 10] = [
    "dihedral",
    "inner_angle_1",
    "inner_angle_2",
    "ratio_1",
    "ratio_2",
    "shape_index",
    "curvedness",
    "mid_x",
    "mid_y",
    "mid_z",
];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("degenerate (zero-area) face {face}")]
    DegenerateFace { face: usize },
    #[error("degenerate (zero-area) one-ring at vertex {vertex}")]
    DegenerateVertex { vertex: usize },
    #[error("edge {edge} does not have exactly two incident faces")]
    NotClosedManifold { edge: usize },
    #[error("non-finite value in channel {channel} at edge {edge}")]
    NonFinite { channel: usize, edge: usize },
    #[error("expected {expected} channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("no training matrices to fit normalization on")]
    EmptyTrainingSet,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureOptions {
    /// Append edge midpoint coordinates (10 channels instead of 7).
    pub with_coords: bool,
    /// Express midpoints relative to the enclosed-volume centroid.
    pub center_coords: bool,
}

impl FeatureOptions {
    pub fn channel_count(&self) -> usize {
        if self.with_coords {
            10
        } else {
            7
        }
    }
}

/// Stacks geometric, shape-index and curvedness channels, plus midpoints
/// when `with_coords` is set, in [`CHANNEL_NAMES`] order.
pub fn assemble_features(mesh: &Mesh, with_coords: bool) -> Result<EdgeFeatureMatrix, FeatureError> {
    assemble_features_with(
        mesh,
        &FeatureOptions {
            with_coords,
            center_coords: false,
        },
    )
}

pub fn assemble_features_with(
    mesh: &Mesh,
    opts: &FeatureOptions,
) -> Result<EdgeFeatureMatrix, FeatureError> {
    let geometric = geometric_edge_features(mesh)?;
    let curv = vertex_curvatures(mesh)?;
    let (si, c) = shape_index_curvedness(&curv);

    let mut out = Array2::zeros((opts.channel_count(), mesh.edge_count()));
    out.slice_mut(s![0..5, ..]).assign(&geometric);
    for (e, (a, b)) in vertex_to_edge(&si, mesh)
        .into_iter()
        .zip(vertex_to_edge(&c, mesh))
        .enumerate()
    {
        out[[5, e]] = a;
        out[[6, e]] = b;
    }
    if opts.with_coords {
        let mut mid = edge_midpoints(mesh);
        if opts.center_coords {
            let c = mesh.volume_centroid();
            for k in 0..3 {
                mid.row_mut(k).mapv_inplace(|x| x - c[k]);
            }
        }
        out.slice_mut(s![7..10, ..]).assign(&mid);
    }
    check_finite(&out)?;
    Ok(out)
}

pub(crate) fn check_finite(m: &EdgeFeatureMatrix) -> Result<(), FeatureError> {
    for ((channel, edge), x) in m.indexed_iter() {
        if !x.is_finite() {
            return Err(FeatureError::NonFinite { channel, edge });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use crate::vec3;

    fn rotation() -> [[f64; 3]; 3] {
        let (a, b) = (0.7f64, -1.1f64);
        let rz = [[a.cos(), -a.sin(), 0.0], [a.sin(), a.cos(), 0.0], [0.0, 0.0, 1.0]];
        let rx = [[1.0, 0.0, 0.0], [0.0, b.cos(), -b.sin()], [0.0, b.sin(), b.cos()]];
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = (0..3).map(|k| rz[i][k] * rx[k][j]).sum();
            }
        }
        r
    }

    #[test]
    fn icosphere_channels() {
        let m = shapes::icosphere(3, 5.0);
        let f = assemble_features(&m, false).unwrap();
        assert_eq!(f.dim(), (7, m.edge_count()));
        assert!(f.row(5).iter().all(|&si| si == 1.0));
        let g = assemble_features(&m, true).unwrap();
        assert_eq!(g.dim(), (10, m.edge_count()));
        assert_eq!(g.slice(s![7..10, ..]), edge_midpoints(&m));
        assert_eq!(g.slice(s![0..7, ..]), f);
    }

    #[test]
    fn rigid_motion_split() {
        let m = shapes::icosphere(2, 3.0);
        let r = rotation();
        let t = [4.0, -2.0, 9.5];
        let moved = m.map_vertices(|p| vec3::add(vec3::mat_mul_vec(&r, p), t));
        let a = assemble_features(&m, true).unwrap();
        let b = assemble_features(&moved, true).unwrap();
        for c in 0..7 {
            for e in 0..m.edge_count() {
                assert!((a[[c, e]] - b[[c, e]]).abs() < 1e-6, "channel {c}");
            }
        }
        for e in 0..m.edge_count() {
            let p = [a[[7, e]], a[[8, e]], a[[9, e]]];
            let q = vec3::add(vec3::mat_mul_vec(&r, p), t);
            for k in 0..3 {
                assert!((q[k] - b[[7 + k, e]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn centered_coordinates() {
        let m = shapes::icosphere(2, 1.0).map_vertices(|p| vec3::add(p, [10.0, 20.0, 30.0]));
        let opts = FeatureOptions {
            with_coords: true,
            center_coords: true,
        };
        let f = assemble_features_with(&m, &opts).unwrap();
        for k in 7..10 {
            let mean = f.row(k).mean().unwrap();
            assert!(mean.abs() < 1e-9, "{mean}");
        }
    }
}
