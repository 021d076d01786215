//! Triangle surface meshes with the edge-centric view needed by edge
//! convolution and pooling.
//!
//! Edges are identified by their sorted vertex pair and stored in
//! lexicographic order, so the edge numbering depends only on the face
//! set and never on the order faces appear in a file.

mod adjacency;
pub(crate) mod collapse;
pub mod io;
pub mod shapes;
pub(crate) mod validate;

use smallvec::SmallVec;
use thiserror::Error;

use crate::vec3::{self, Vec3};

pub use adjacency::{build_edge_adjacency, EdgeAdjacency};
pub use io::{load_mesh, read_obj, read_off, save_mesh, write_obj, write_off};
pub use validate::{validate_manifold, ManifoldReport};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("face {face} references vertex {index}, but the mesh has {vertex_count} vertices")]
    VertexOutOfRange {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("face {face} repeats a vertex")]
    RepeatedVertex { face: usize },
    #[error("vertex {0} has a non-finite coordinate")]
    NonFiniteVertex(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported mesh format {0:?} (expected .obj or .off)")]
    UnsupportedFormat(String),
    #[error("boundary edge(s) present: {edges:?}")]
    BoundaryEdges { edges: Vec<usize> },
    #[error("non-manifold edge(s) present: {edges:?}")]
    NonManifoldEdges { edges: Vec<usize> },
    #[error("degenerate (zero-area) geometry at face {face}")]
    DegenerateFace { face: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Indexed triangle mesh. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    edge_faces: Vec<SmallVec<[usize; 2]>>,
    face_edges: Vec<[usize; 3]>,
}

impl Mesh {
    /// Builds a mesh and its deduplicated edge list. Face winding is kept
    /// exactly as given.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        for (i, v) in vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(MeshError::NonFiniteVertex(i));
            }
        }
        for (f, face) in faces.iter().enumerate() {
            for &index in face {
                if index >= vertices.len() {
                    return Err(MeshError::VertexOutOfRange {
                        face: f,
                        index,
                        vertex_count: vertices.len(),
                    });
                }
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(MeshError::RepeatedVertex { face: f });
            }
        }

        // (sorted pair, face, slot) triples, sorted to get lexicographic edge ids
        let mut half: Vec<([usize; 2], usize, usize)> = Vec::with_capacity(faces.len() * 3);
        for (f, face) in faces.iter().enumerate() {
            for k in 0..3 {
                half.push((sorted_pair(face[k], face[(k + 1) % 3]), f, k));
            }
        }
        half.sort_unstable();

        let mut edges: Vec<[usize; 2]> = Vec::with_capacity(half.len() / 2 + 1);
        let mut edge_faces: Vec<SmallVec<[usize; 2]>> = Vec::with_capacity(half.len() / 2 + 1);
        let mut face_edges = vec![[usize::MAX; 3]; faces.len()];
        for (key, f, k) in half {
            if edges.last() != Some(&key) {
                edges.push(key);
                edge_faces.push(SmallVec::new());
            }
            let e = edges.len() - 1;
            edge_faces[e].push(f);
            face_edges[f][k] = e;
        }
        for incident in &mut edge_faces {
            incident.sort_unstable();
            incident.dedup();
        }

        Ok(Self {
            vertices,
            faces,
            edges,
            edge_faces,
            face_edges,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Unordered vertex pairs `[lo, hi]`, in lexicographic order.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Incident faces per edge, ascending.
    pub fn edge_faces(&self, edge: usize) -> &[usize] {
        &self.edge_faces[edge]
    }

    /// Edge ids of a face: slot `k` holds the edge `(face[k], face[k+1])`.
    pub fn face_edges(&self, face: usize) -> [usize; 3] {
        self.face_edges[face]
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edge id of the unordered pair `(a, b)`.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edges.binary_search(&sorted_pair(a, b)).ok()
    }

    pub fn vertex(&self, i: usize) -> Vec3 {
        self.vertices[i]
    }

    pub fn face_points(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized face normal (length = twice the area).
    pub fn face_normal_raw(&self, f: usize) -> Vec3 {
        let [p, q, r] = self.face_points(f);
        vec3::cross(vec3::sub(q, p), vec3::sub(r, p))
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * vec3::norm(self.face_normal_raw(f))
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed enclosed volume (positive for outward winding).
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                vec3::dot(self.vertices[a], vec3::cross(self.vertices[b], self.vertices[c]))
            })
            .sum::<f64>()
            / 6.0
    }

    /// Centroid of the solid enclosed by a closed, consistently wound mesh.
    /// Falls back to the vertex mean when the enclosed volume vanishes.
    pub fn volume_centroid(&self) -> Vec3 {
        let mut acc = [0.0; 3];
        let mut vol = 0.0;
        for &[a, b, c] in &self.faces {
            let (p, q, r) = (self.vertices[a], self.vertices[b], self.vertices[c]);
            let v = vec3::dot(p, vec3::cross(q, r)) / 6.0;
            vol += v;
            acc = vec3::add(acc, vec3::scale(vec3::add(vec3::add(p, q), r), v / 4.0));
        }
        if vol.abs() > 1e-300 {
            vec3::scale(acc, 1.0 / vol)
        } else {
            let n = self.vertices.len().max(1) as f64;
            let sum = self.vertices.iter().fold([0.0; 3], |s, &v| vec3::add(s, v));
            vec3::scale(sum, 1.0 / n)
        }
    }

    pub fn mean_edge_length(&self) -> f64 {
        if self.edges.is_empty() {
            return 0.0;
        }
        self.edges
            .iter()
            .map(|&[a, b]| vec3::norm(vec3::sub(self.vertices[a], self.vertices[b])))
            .sum::<f64>()
            / self.edges.len() as f64
    }

    /// Same topology, vertices mapped through `f`.
    pub fn map_vertices(&self, f: impl Fn(Vec3) -> Vec3) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Drops vertices no face references, renumbering the rest in order.
    pub fn compacted(&self) -> Mesh {
        let (vertices, faces) = compact(&self.vertices, &self.faces);
        Mesh::new(vertices, faces).expect("compaction preserves validity")
    }
}

#[inline]
pub(crate) fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Removes unreferenced vertices, preserving the relative order of the rest.
pub(crate) fn compact(vertices: &[Vec3], faces: &[[usize; 3]]) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let mut remap = vec![usize::MAX; vertices.len()];
    let mut used = vec![false; vertices.len()];
    for face in faces {
        for &v in face {
            used[v] = true;
        }
    }
    let mut out = Vec::new();
    for (i, &u) in used.iter().enumerate() {
        if u {
            remap[i] = out.len();
            out.push(vertices[i]);
        }
    }
    let faces = faces
        .iter()
        .map(|f| [remap[f[0]], remap[f[1]], remap[f[2]]])
        .collect();
    (out, faces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tetrahedron_counts() {
        let m = shapes::tetrahedron();
        assert_eq!((m.vertex_count(), m.face_count(), m.edge_count()), (4, 4, 6));
        assert!(m.signed_volume() > 0.0);
    }

    #[test]
    fn edges_are_lexicographic_and_unique() {
        let m = shapes::icosphere(2, 1.0);
        for w in m.edges().windows(2) {
            assert!(w[0] < w[1]);
        }
        assert_eq!(m.edge_count() * 2, m.face_count() * 3);
    }

    #[test]
    fn face_edges_match_vertex_pairs() {
        let m = shapes::icosahedron();
        for f in 0..m.face_count() {
            let face = m.faces()[f];
            for k in 0..3 {
                let e = m.face_edges(f)[k];
                assert_eq!(m.edges()[e], sorted_pair(face[k], face[(k + 1) % 3]));
                assert!(m.edge_faces(e).contains(&f));
            }
        }
    }

    #[test]
    fn rejects_bad_faces() {
        let v = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!(matches!(
            Mesh::new(v.clone(), vec![[0, 1, 3]]),
            Err(MeshError::VertexOutOfRange { .. })
        ));
        assert!(matches!(
            Mesh::new(v, vec![[0, 1, 1]]),
            Err(MeshError::RepeatedVertex { face: 0 })
        ));
    }

    #[test]
    fn volume_centroid_of_translated_sphere() {
        let m = shapes::icosphere(3, 2.0).map_vertices(|p| vec3::add(p, [1.0, -2.0, 3.0]));
        let c = m.volume_centroid();
        for (got, want) in c.iter().zip([1.0, -2.0, 3.0]) {
            assert!((got - want).abs() < 1e-9);
        }
    }
}
