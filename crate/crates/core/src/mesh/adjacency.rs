use serde::{Deserialize, Serialize};

use super::{Mesh, MeshError};

/// Per-edge 4-neighborhood used by edge convolution.
///
/// For edge `e` with incident faces `f0 < f1`, `(a, b)` are the two other
/// edges of `f0` and `(c, d)` those of `f1`. Within a face the neighbors are
/// listed in winding order starting from `e`: if `e` occupies slot `k` of the
/// face, `a` is slot `k+1` and `b` slot `k+2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeAdjacency {
    neighbors: Vec<[usize; 4]>,
}

impl EdgeAdjacency {
    /// Wraps a precomputed neighbor table. Every entry must index into the
    /// table itself.
    pub fn from_neighbors(neighbors: Vec<[usize; 4]>) -> Self {
        let n = neighbors.len();
        debug_assert!(neighbors.iter().flatten().all(|&x| x < n));
        Self { neighbors }
    }

    pub fn neighbors(&self) -> &[[usize; 4]] {
        &self.neighbors
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len()
    }

    /// The same table with the `(a, c)` and `(b, d)` roles exchanged.
    pub fn swapped_sides(&self) -> Self {
        Self {
            neighbors: self.neighbors.iter().map(|&[a, b, c, d]| [c, d, a, b]).collect(),
        }
    }
}

/// Builds the 4-neighborhood of every edge. Requires a closed 2-manifold:
/// boundary and non-manifold edges are reported by id.
pub fn build_edge_adjacency(mesh: &Mesh) -> Result<EdgeAdjacency, MeshError> {
    let mut boundary = Vec::new();
    let mut non_manifold = Vec::new();
    for e in 0..mesh.edge_count() {
        match mesh.edge_faces(e).len() {
            2 => {}
            n if n < 2 => boundary.push(e),
            _ => non_manifold.push(e),
        }
    }
    if !boundary.is_empty() {
        return Err(MeshError::BoundaryEdges { edges: boundary });
    }
    if !non_manifold.is_empty() {
        return Err(MeshError::NonManifoldEdges {
            edges: non_manifold,
        });
    }

    let neighbors = (0..mesh.edge_count())
        .map(|e| {
            let faces = mesh.edge_faces(e);
            let [a, b] = others_in_face(mesh, faces[0], e);
            let [c, d] = others_in_face(mesh, faces[1], e);
            [a, b, c, d]
        })
        .collect();
    Ok(EdgeAdjacency { neighbors })
}

fn others_in_face(mesh: &Mesh, face: usize, edge: usize) -> [usize; 2] {
    let fe = mesh.face_edges(face);
    let k = fe.iter().position(|&x| x == edge).expect("edge belongs to face");
    [fe[(k + 1) % 3], fe[(k + 2) % 3]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    #[test]
    fn tetrahedron_excludes_opposite_edge() {
        let m = shapes::tetrahedron();
        let adj = build_edge_adjacency(&m).unwrap();
        for (e, &[lo, hi]) in m.edges().iter().enumerate() {
            let opposite = m
                .edges()
                .iter()
                .position(|&[p, q]| p != lo && p != hi && q != lo && q != hi)
                .unwrap();
            let mut quad = adj.neighbors()[e].to_vec();
            quad.sort_unstable();
            let mut expected: Vec<usize> = (0..6).filter(|&x| x != e && x != opposite).collect();
            expected.sort_unstable();
            assert_eq!(quad, expected);
        }
    }

    #[test]
    fn icosahedron_matches_brute_force() {
        let m = shapes::icosahedron();
        let adj = build_edge_adjacency(&m).unwrap();
        for (e, quad) in adj.neighbors().iter().enumerate() {
            // brute force: edges sharing a face with e, excluding e
            let mut expected = Vec::new();
            for (f, face) in m.faces().iter().enumerate() {
                let in_face = (0..3).any(|k| {
                    let p = crate::mesh::sorted_pair(face[k], face[(k + 1) % 3]);
                    p == m.edges()[e]
                });
                if in_face {
                    for k in 0..3 {
                        let x = m.edge_index(face[k], face[(k + 1) % 3]).unwrap();
                        if x != e {
                            expected.push((f, x));
                        }
                    }
                }
            }
            let mut got: Vec<usize> = quad.to_vec();
            let mut want: Vec<usize> = expected.iter().map(|&(_, x)| x).collect();
            got.sort_unstable();
            want.sort_unstable();
            assert_eq!(got, want, "edge {e}");
            assert!(quad.iter().all(|&x| x != e && x < m.edge_count()));
        }
    }

    #[test]
    fn neighbor_pairs_share_a_face_with_edge() {
        let m = shapes::icosphere(1, 1.0);
        let adj = build_edge_adjacency(&m).unwrap();
        for (e, &[a, b, c, d]) in adj.neighbors().iter().enumerate() {
            let f = m.edge_faces(e);
            let fe0 = m.face_edges(f[0]);
            let fe1 = m.face_edges(f[1]);
            assert!(fe0.contains(&a) && fe0.contains(&b));
            assert!(fe1.contains(&c) && fe1.contains(&d));
        }
    }

    #[test]
    fn each_edge_appears_four_times() {
        let m = shapes::icosphere(2, 1.0);
        let adj = build_edge_adjacency(&m).unwrap();
        let mut count = vec![0usize; m.edge_count()];
        for quad in adj.neighbors() {
            for &x in quad {
                count[x] += 1;
            }
        }
        assert!(count.iter().all(|&c| c == 4));
    }

    #[test]
    fn single_triangle_is_rejected() {
        let m = Mesh::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let err = build_edge_adjacency(&m).unwrap_err();
        assert!(err.to_string().contains("boundary edge"));
        assert!(matches!(err, MeshError::BoundaryEdges { ref edges } if edges.len() == 3));
    }
}
