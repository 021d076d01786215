//! Greedy quadric-error edge collapse down to an edge budget.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::VoxelError;
use crate::mesh::collapse::CollapseMesh;
use crate::mesh::{validate_manifold, Mesh};
use crate::vec3::{self, Vec3};

/// Symmetric 4x4 plane quadric, upper triangle.
#[derive(Debug, Clone, Copy, Default)]
struct Quadric([f64; 10]);

impl Quadric {
    fn from_plane(n: Vec3, d: f64) -> Self {
        let [a, b, c] = n;
        Quadric([
            a * a,
            a * b,
            a * c,
            a * d,
            b * b,
            b * c,
            b * d,
            c * c,
            c * d,
            d * d,
        ])
    }

    fn add(&self, o: &Quadric) -> Quadric {
        let mut out = *self;
        for (x, y) in out.0.iter_mut().zip(o.0.iter()) {
            *x += y;
        }
        out
    }

    fn error(&self, p: Vec3) -> f64 {
        let q = &self.0;
        let [x, y, z] = p;
        q[0] * x * x + 2.0 * q[1] * x * y + 2.0 * q[2] * x * z + 2.0 * q[3] * x
            + q[4] * y * y
            + 2.0 * q[5] * y * z
            + 2.0 * q[6] * y
            + q[7] * z * z
            + 2.0 * q[8] * z
            + q[9]
    }

    /// Minimizer of the quadric, if the 3x3 system is well conditioned.
    fn optimum(&self) -> Option<Vec3> {
        let q = &self.0;
        let m = [[q[0], q[1], q[2]], [q[1], q[4], q[5]], [q[2], q[5], q[7]]];
        let rhs = [-q[3], -q[6], -q[8]];
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let scale = (q[0] + q[4] + q[7]).max(1e-300);
        if det.abs() <= 1e-9 * scale * scale * scale {
            return None;
        }
        let solve_col = |col: usize| {
            let mut mm = m;
            for r in 0..3 {
                mm[r][col] = rhs[r];
            }
            (mm[0][0] * (mm[1][1] * mm[2][2] - mm[1][2] * mm[2][1])
                - mm[0][1] * (mm[1][0] * mm[2][2] - mm[1][2] * mm[2][0])
                + mm[0][2] * (mm[1][0] * mm[2][1] - mm[1][1] * mm[2][0]))
                / det
        };
        Some([solve_col(0), solve_col(1), solve_col(2)])
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: f64,
    u: usize,
    v: usize,
    stamp_u: u32,
    stamp_v: u32,
    target: Vec3,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    // min-heap on (cost, u, v)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.u.cmp(&self.u))
            .then_with(|| other.v.cmp(&self.v))
    }
}

struct Decimator {
    cm: CollapseMesh,
    quadrics: Vec<Quadric>,
    stamps: Vec<u32>,
}

impl Decimator {
    fn candidate(&self, u: usize, v: usize) -> Candidate {
        let (u, v) = if u < v { (u, v) } else { (v, u) };
        let q = self.quadrics[u].add(&self.quadrics[v]);
        let (pu, pv) = (self.cm.positions[u], self.cm.positions[v]);
        let mid = vec3::midpoint(pu, pv);
        let len = vec3::norm(vec3::sub(pu, pv));
        let mut best = (q.error(mid), mid);
        for p in [pu, pv] {
            let e = q.error(p);
            if e < best.0 {
                best = (e, p);
            }
        }
        if let Some(p) = q.optimum() {
            // keep the optimum near the edge so thin features do not explode
            if vec3::norm(vec3::sub(p, mid)) <= len {
                let e = q.error(p);
                if e < best.0 {
                    best = (e, p);
                }
            }
        }
        Candidate {
            cost: best.0.max(0.0),
            u,
            v,
            stamp_u: self.stamps[u],
            stamp_v: self.stamps[v],
            target: best.1,
        }
    }

    fn fresh(&self, c: &Candidate) -> bool {
        self.cm.vertex_alive(c.u)
            && self.cm.vertex_alive(c.v)
            && self.stamps[c.u] == c.stamp_u
            && self.stamps[c.v] == c.stamp_v
    }

    /// Rejects collapses that flip or degenerate a surviving face. In strict
    /// mode, also rejects collapses that create a sliver worse than before.
    fn geometry_ok(&self, u: usize, v: usize, p: Vec3, strict: bool) -> bool {
        for (moved, other) in [(u, v), (v, u)] {
            for f in self.cm.faces_of(moved) {
                let face = self.cm.face(f);
                if face.contains(&other) {
                    continue; // removed by the collapse
                }
                let pts = face.map(|w| self.cm.positions[w]);
                let new_pts = face.map(|w| if w == moved { p } else { self.cm.positions[w] });
                let n_old = tri_normal(pts);
                let n_new = tri_normal(new_pts);
                let (a_old, a_new) = (vec3::norm(n_old), vec3::norm(n_new));
                let scale = perimeter_sq(new_pts);
                if a_new <= 1e-12 * scale {
                    return false;
                }
                if vec3::dot(n_old, n_new) <= 0.2 * a_old * a_new {
                    return false;
                }
                if strict {
                    let q_new = quality(new_pts);
                    if q_new < 0.05 && q_new < quality(pts) {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn push_ring(&self, heap: &mut BinaryHeap<Candidate>, u: usize) {
        for w in self.cm.neighbors(u) {
            heap.push(self.candidate(u, w));
        }
    }
}

fn tri_normal(p: [Vec3; 3]) -> Vec3 {
    vec3::cross(vec3::sub(p[1], p[0]), vec3::sub(p[2], p[0]))
}

fn perimeter_sq(p: [Vec3; 3]) -> f64 {
    vec3::norm_sq(vec3::sub(p[1], p[0]))
        + vec3::norm_sq(vec3::sub(p[2], p[1]))
        + vec3::norm_sq(vec3::sub(p[0], p[2]))
}

/// 1 for equilateral, 0 for degenerate.
fn quality(p: [Vec3; 3]) -> f64 {
    let area2 = vec3::norm(tri_normal(p));
    2.0 * 3f64.sqrt() * area2 / perimeter_sq(p).max(1e-300)
}

/// Collapses edges in ascending quadric error until the mesh has at most
/// `target_edges` edges. Closed meshes satisfy 2E = 3F, so every collapse
/// removes exactly three edges and the result has the largest edge count
/// `<= target_edges` that is reachable from the input (`E - 3k`). Meshes
/// already within budget are returned unchanged.
pub fn decimate(mesh: &Mesh, target_edges: usize) -> Result<Mesh, VoxelError> {
    if target_edges < 6 {
        return Err(VoxelError::TargetTooSmall(target_edges));
    }
    let report = validate_manifold(mesh);
    if !report.is_closed_manifold {
        return Err(VoxelError::NotClosedManifold(report));
    }
    if mesh.edge_count() <= target_edges {
        return Ok(mesh.clone());
    }

    let mut quadrics = vec![Quadric::default(); mesh.vertex_count()];
    for (f, face) in mesh.faces().iter().enumerate() {
        let n = mesh.face_normal_raw(f);
        let len = vec3::norm(n);
        if len <= 0.0 {
            continue;
        }
        let n = vec3::scale(n, 1.0 / len);
        let d = -vec3::dot(n, mesh.vertex(face[0]));
        let q = Quadric::from_plane(n, d);
        for &v in face {
            quadrics[v] = quadrics[v].add(&q);
        }
    }
    let mut dec = Decimator {
        cm: CollapseMesh::from_mesh(mesh),
        quadrics,
        stamps: vec![0; mesh.vertex_count()],
    };

    let mut heap: BinaryHeap<Candidate> = mesh
        .edges()
        .iter()
        .map(|&[u, v]| dec.candidate(u, v))
        .collect();

    // Rounds run until the heap drains; rejected candidates are retried in
    // the next round. A round without progress relaxes the sliver guard, a
    // second one gives up.
    let mut strict = true;
    loop {
        let round_start = dec.cm.edge_count();
        let mut deferred: Vec<Candidate> = Vec::new();
        while dec.cm.edge_count() > target_edges {
            let Some(c) = heap.pop() else { break };
            if !dec.fresh(&c) {
                continue;
            }
            if !dec.cm.can_collapse(c.u, c.v) || !dec.geometry_ok(c.u, c.v, c.target, strict) {
                deferred.push(c);
                continue;
            }
            dec.cm.collapse(c.u, c.v);
            dec.cm.positions[c.u] = c.target;
            dec.quadrics[c.u] = dec.quadrics[c.u].add(&dec.quadrics[c.v]);
            dec.stamps[c.u] += 1;
            dec.push_ring(&mut heap, c.u);
        }
        if dec.cm.edge_count() <= target_edges {
            break;
        }
        if dec.cm.edge_count() == round_start {
            if !strict {
                break;
            }
            strict = false;
        }
        heap = deferred
            .into_iter()
            .filter(|d| dec.cm.vertex_alive(d.u) && dec.cm.vertex_alive(d.v))
            .map(|d| dec.candidate(d.u, d.v))
            .collect();
        if heap.is_empty() {
            break;
        }
    }

    if dec.cm.edge_count() > target_edges {
        return Err(VoxelError::Unreachable {
            target: target_edges,
            reached: dec.cm.edge_count(),
        });
    }
    Ok(dec.cm.to_mesh())
}
