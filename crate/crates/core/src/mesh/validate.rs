use serde::{Deserialize, Serialize};

use super::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifoldReport {
    pub is_closed_manifold: bool,
    pub boundary_edge_count: usize,
    pub non_manifold_edge_count: usize,
    /// V - E + F
    pub euler_characteristic: i64,
    /// Components of the face set, connected through shared vertices.
    pub connected_component_count: usize,
}

/// Topological summary of any mesh. Never fails.
pub fn validate_manifold(mesh: &Mesh) -> ManifoldReport {
    let mut boundary = 0;
    let mut non_manifold = 0;
    for e in 0..mesh.edge_count() {
        match mesh.edge_faces(e).len() {
            2 => {}
            n if n < 2 => boundary += 1,
            _ => non_manifold += 1,
        }
    }

    let mut uf = UnionFind::new(mesh.vertex_count());
    for &[a, b, c] in mesh.faces() {
        uf.union(a, b);
        uf.union(b, c);
    }
    let mut roots: Vec<usize> = mesh
        .faces()
        .iter()
        .map(|f| uf.find(f[0]))
        .collect();
    roots.sort_unstable();
    roots.dedup();

    ManifoldReport {
        is_closed_manifold: boundary == 0 && non_manifold == 0 && mesh.face_count() > 0,
        boundary_edge_count: boundary,
        non_manifold_edge_count: non_manifold,
        euler_characteristic: mesh.vertex_count() as i64 - mesh.edge_count() as i64
            + mesh.face_count() as i64,
        connected_component_count: roots.len(),
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}
