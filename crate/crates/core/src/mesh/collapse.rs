//! Mutable face soup supporting half-edge-free edge collapses on closed
//! manifold meshes. Shared by geometric decimation and feature pooling.

use smallvec::SmallVec;

use super::{compact, Mesh};
use crate::vec3::Vec3;

pub(crate) type Ring = SmallVec<[usize; 12]>;

#[derive(Debug, Clone)]
pub(crate) struct CollapseMesh {
    pub(crate) positions: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    face_alive: Vec<bool>,
    /// Incident faces per vertex; may hold dead faces, filtered on read.
    vert_faces: Vec<Vec<usize>>,
    vert_alive: Vec<bool>,
    alive_faces: usize,
    alive_verts: usize,
}

/// Result of a successful collapse of `(keep, removed)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Collapsed {
    /// Vertices opposite the collapsed edge in its two faces.
    pub(crate) opposite: [usize; 2],
}

impl CollapseMesh {
    pub(crate) fn from_mesh(mesh: &Mesh) -> Self {
        let mut vert_faces = vec![Vec::new(); mesh.vertex_count()];
        for (f, face) in mesh.faces().iter().enumerate() {
            for &v in face {
                vert_faces[v].push(f);
            }
        }
        let vert_alive: Vec<bool> = vert_faces.iter().map(|fs| !fs.is_empty()).collect();
        let alive_verts = vert_alive.iter().filter(|&&a| a).count();
        Self {
            positions: mesh.vertices().to_vec(),
            faces: mesh.faces().to_vec(),
            face_alive: vec![true; mesh.face_count()],
            vert_faces,
            vert_alive,
            alive_faces: mesh.face_count(),
            alive_verts,
        }
    }

    pub(crate) fn edge_count(&self) -> usize {
        // closed manifold: 2E = 3F
        self.alive_faces * 3 / 2
    }

    pub(crate) fn vertex_alive(&self, v: usize) -> bool {
        self.vert_alive[v]
    }

    pub(crate) fn face(&self, f: usize) -> [usize; 3] {
        self.faces[f]
    }

    pub(crate) fn faces_of(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.vert_faces[v]
            .iter()
            .copied()
            .filter(move |&f| self.face_alive[f])
    }

    /// One-ring vertex neighbors, sorted and unique.
    pub(crate) fn neighbors(&self, v: usize) -> Ring {
        let mut out = Ring::new();
        for f in self.faces_of(v) {
            for &w in &self.faces[f] {
                if w != v {
                    out.push(w);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Faces containing both `u` and `v`.
    pub(crate) fn edge_faces(&self, u: usize, v: usize) -> SmallVec<[usize; 2]> {
        self.faces_of(u)
            .filter(|&f| self.faces[f].contains(&v))
            .collect()
    }

    /// Link condition for closed surfaces: the edge has two faces, the
    /// endpoints share exactly the two opposite vertices, and the mesh is
    /// larger than a tetrahedron.
    pub(crate) fn can_collapse(&self, u: usize, v: usize) -> bool {
        if self.alive_verts <= 4 {
            return false;
        }
        let ef = self.edge_faces(u, v);
        if ef.len() != 2 {
            return false;
        }
        let nu = self.neighbors(u);
        let nv = self.neighbors(v);
        let common = nu.iter().filter(|x| nv.binary_search(x).is_ok()).count();
        common == 2
    }

    /// Merges `removed` into `keep`. The caller must have checked
    /// [`can_collapse`](Self::can_collapse).
    pub(crate) fn collapse(&mut self, keep: usize, removed: usize) -> Collapsed {
        let ef = self.edge_faces(keep, removed);
        debug_assert_eq!(ef.len(), 2);
        let mut opposite = [0usize; 2];
        for (slot, &f) in ef.iter().enumerate() {
            opposite[slot] = *self.faces[f]
                .iter()
                .find(|&&w| w != keep && w != removed)
                .expect("triangle has a third vertex");
            self.face_alive[f] = false;
            self.alive_faces -= 1;
        }
        let moved: Vec<usize> = self.faces_of(removed).collect();
        for f in moved {
            for slot in self.faces[f].iter_mut() {
                if *slot == removed {
                    *slot = keep;
                }
            }
            self.vert_faces[keep].push(f);
        }
        self.vert_faces[removed].clear();
        self.vert_alive[removed] = false;
        self.alive_verts -= 1;
        for v in [keep, opposite[0], opposite[1]] {
            let alive = &self.face_alive;
            self.vert_faces[v].retain(|&f| alive[f]);
        }
        Collapsed { opposite }
    }

    /// Surviving faces over compacted vertices, face order preserved.
    pub(crate) fn to_mesh(&self) -> Mesh {
        let faces: Vec<[usize; 3]> = self
            .faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, &a)| a)
            .map(|(f, _)| *f)
            .collect();
        let (v, f) = compact(&self.positions, &faces);
        Mesh::new(v, f).expect("collapse preserves index validity")
    }
}
