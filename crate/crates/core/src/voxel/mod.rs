//! Voxel masks to network-ready meshes: ROI selection, marching cubes and
//! quadric-error decimation to an edge budget.

mod decimate;
mod io;
mod marching_cubes;
mod roi;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{validate_manifold, ManifoldReport, Mesh, MeshError};
use crate::vec3::Vec3;

pub use decimate::decimate;
pub use io::{load_mask, save_mask, MaskHeader};
pub use marching_cubes::marching_cubes;
pub use roi::{center_of_mass, extract_roi, RoiSpec};

#[derive(Debug, Error)]
pub enum VoxelError {
    #[error("invalid voxel grid: {0}")]
    InvalidGrid(String),
    #[error("mask has no nonzero voxel")]
    EmptyMask,
    #[error("grids differ: {0}")]
    GridMismatch(String),
    #[error("empty isosurface: no voxel exceeds iso {0}")]
    EmptyIsosurface(f64),
    #[error("invalid iso value {0}")]
    InvalidIso(f64),
    #[error("mesh is not a closed manifold: {0:?}")]
    NotClosedManifold(ManifoldReport),
    #[error("edge target {0} is below the tetrahedron minimum of 6")]
    TargetTooSmall(usize),
    #[error("cannot reach {target} edges without breaking manifoldness (stuck at {reached})")]
    Unreachable { target: usize, reached: usize },
    #[error("mask file: {0}")]
    Format(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Scalar grid with anisotropic spacing. Voxel `(i, j, k)` has its center at
/// `origin + (i*sx, j*sy, k*sz)` (mm); values are stored x-fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelMask {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: Vec3,
    values: Vec<f64>,
}

impl VoxelMask {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: Vec3,
        values: Vec<f64>,
    ) -> Result<Self, VoxelError> {
        if dims.contains(&0) {
            return Err(VoxelError::InvalidGrid(format!("dims must be positive, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(VoxelError::InvalidGrid(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(VoxelError::InvalidGrid("origin must be finite".into()));
        }
        let n = dims[0] * dims[1] * dims[2];
        if values.len() != n {
            return Err(VoxelError::InvalidGrid(format!(
                "expected {n} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            values,
        })
    }

    /// All-zero grid.
    pub fn zeros(dims: [usize; 3], spacing: [f64; 3], origin: Vec3) -> Result<Self, VoxelError> {
        Self::new(dims, spacing, origin, vec![0.0; dims[0] * dims[1] * dims[2]])
    }

    /// Grid sampled from `f(world point)`.
    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: Vec3,
        f: impl Fn(Vec3) -> f64,
    ) -> Result<Self, VoxelError> {
        let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    values.push(f([
                        origin[0] + i as f64 * spacing[0],
                        origin[1] + j as f64 * spacing[1],
                        origin[2] + k as f64 * spacing[2],
                    ]));
                }
            }
        }
        Self::new(dims, spacing, origin, values)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let idx = self.index(i, j, k);
        self.values[idx] = value;
    }

    #[inline]
    pub fn world(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    pub fn count_nonzero(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    pub(crate) fn same_grid(&self, other: &VoxelMask) -> Result<(), VoxelError> {
        let close = |a: &[f64; 3], b: &[f64; 3]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9);
        if self.dims != other.dims {
            return Err(VoxelError::GridMismatch(format!(
                "dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        if !close(&self.spacing, &other.spacing) || !close(&self.origin, &other.origin) {
            return Err(VoxelError::GridMismatch("spacing or origin differ".into()));
        }
        Ok(())
    }
}

/// Which surface a network input mesh is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MeshMode {
    /// Lesion surface only.
    Uia,
    /// Lesion plus connected parent vessels inside a cube around it.
    Roi,
}

impl MeshMode {
    /// Edge budget used for each mode's network input.
    pub fn default_edge_budget(self) -> usize {
        match self {
            MeshMode::Uia => 1000,
            MeshMode::Roi => 2000,
        }
    }
}

/// Full mask-to-mesh path: optional ROI selection, isosurface at 0.5, and
/// decimation to the edge budget. In `Uia` mode only the largest surface
/// component is kept.
pub fn mesh_from_masks(
    vessels: Option<&VoxelMask>,
    lesion: &VoxelMask,
    mode: MeshMode,
    cube_mm: f64,
    target_edges: usize,
) -> Result<Mesh, VoxelError> {
    let surface = match mode {
        MeshMode::Uia => largest_component(&marching_cubes(lesion, 0.5)?),
        MeshMode::Roi => {
            let empty;
            let vessels = match vessels {
                Some(v) => v,
                None => {
                    empty = VoxelMask::zeros(lesion.dims(), lesion.spacing(), lesion.origin())?;
                    &empty
                }
            };
            let spec = RoiSpec {
                cube_side: cube_mm,
                center: center_of_mass(lesion)?,
            };
            let roi = extract_roi(vessels, lesion, &spec)?;
            marching_cubes(&roi, 0.5)?
        }
    };
    let report = validate_manifold(&surface);
    if !report.is_closed_manifold {
        return Err(VoxelError::NotClosedManifold(report));
    }
    decimate(&surface, target_edges)
}

/// The connected component with the most faces (ties: lowest first face).
pub fn largest_component(mesh: &Mesh) -> Mesh {
    use crate::mesh::validate::UnionFind;
    let mut uf = UnionFind::new(mesh.vertex_count());
    for &[a, b, c] in mesh.faces() {
        uf.union(a, b);
        uf.union(b, c);
    }
    let mut counts = std::collections::BTreeMap::new();
    let roots: Vec<usize> = mesh.faces().iter().map(|f| uf.find(f[0])).collect();
    for &r in &roots {
        *counts.entry(r).or_insert(0usize) += 1;
    }
    if counts.len() <= 1 {
        return mesh.clone();
    }
    let best = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&r, _)| r)
        .expect("non-empty");
    let faces: Vec<[usize; 3]> = mesh
        .faces()
        .iter()
        .zip(&roots)
        .filter(|(_, &r)| r == best)
        .map(|(f, _)| *f)
        .collect();
    let (v, f) = crate::mesh::compact(mesh.vertices(), &faces);
    Mesh::new(v, f).expect("subset of a valid mesh")
}
