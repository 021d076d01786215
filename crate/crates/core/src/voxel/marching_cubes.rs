//! Marching cubes with a face-consistent case table.
//!
//! The 256-entry table is generated rather than transcribed: on each cube
//! face the crossings are paired so that every maximal run of inside corners
//! is cut off by one segment. On an ambiguous face (two diagonal inside
//! corners) this always separates the inside corners. Because the rule only
//! looks at the four corners of a face, the two cubes sharing a face emit
//! the same segments in opposite directions, so the surface is closed and
//! consistently oriented. Segments are chained into loops per cube and each
//! loop is fanned from a vertex whose diagonals stay off the cube faces; if
//! no such vertex exists, a loop-centroid vertex is inserted instead.
//!
//! Outside the grid the field is taken as 0 (or `iso - 1` when `iso <= 0`),
//! so objects touching the volume border are capped.

use std::collections::HashMap;
use std::sync::OnceLock;

use super::{VoxelError, VoxelMask};
use crate::mesh::Mesh;
use crate::vec3::{self, Vec3};

/// Cube corners, bit `c` of a case index: offset `(c & 1, c >> 1 & 1, c >> 2 & 1)`.
const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [2, 3],
    [4, 5],
    [6, 7],
    [0, 2],
    [1, 3],
    [4, 6],
    [5, 7],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Corners of each face, counter-clockwise seen from outside the cube.
const FACES: [[usize; 4]; 6] = [
    [0, 4, 6, 2],
    [1, 3, 7, 5],
    [0, 1, 5, 4],
    [2, 6, 7, 3],
    [0, 2, 3, 1],
    [4, 5, 7, 6],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Edge(usize),
    Centroid,
}

#[derive(Debug, Clone)]
struct LoopPlan {
    edges: Vec<usize>,
    triangles: Vec<[Slot; 3]>,
}

fn edge_between(a: usize, b: usize) -> usize {
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    EDGES
        .iter()
        .position(|e| e[0] == a && e[1] == b)
        .expect("adjacent corners")
}

fn faces_of_edge(e: usize) -> [usize; 2] {
    let [a, b] = EDGES[e];
    let mut out = [usize::MAX; 2];
    let mut n = 0;
    for (f, corners) in FACES.iter().enumerate() {
        if corners.contains(&a) && corners.contains(&b) {
            out[n] = f;
            n += 1;
        }
    }
    debug_assert_eq!(n, 2);
    out
}

fn share_face(e1: usize, e2: usize) -> bool {
    let f1 = faces_of_edge(e1);
    let f2 = faces_of_edge(e2);
    f1.iter().any(|f| f2.contains(f))
}

fn build_case(case: usize) -> Vec<LoopPlan> {
    let inside = |c: usize| case >> c & 1 == 1;
    let mut next = [usize::MAX; 12];
    for q in FACES {
        let flags: Vec<bool> = q.iter().map(|&c| inside(c)).collect();
        if flags.iter().all(|&x| x) || flags.iter().all(|&x| !x) {
            continue;
        }
        for i in 0..4 {
            if !flags[i] && flags[(i + 1) % 4] {
                // walk the inside run to its exit crossing
                let mut j = (i + 1) % 4;
                while flags[(j + 1) % 4] {
                    j = (j + 1) % 4;
                }
                let enter = edge_between(q[i], q[(i + 1) % 4]);
                let exit = edge_between(q[j], q[(j + 1) % 4]);
                debug_assert_eq!(next[enter], usize::MAX);
                next[enter] = exit;
            }
        }
    }

    let mut visited = [false; 12];
    let mut loops = Vec::new();
    for start in 0..12 {
        if next[start] == usize::MAX || visited[start] {
            continue;
        }
        let mut edges = Vec::new();
        let mut e = start;
        while !visited[e] {
            visited[e] = true;
            edges.push(e);
            e = next[e];
        }
        debug_assert_eq!(e, start);
        loops.push(triangulate(edges));
    }
    loops
}

fn triangulate(edges: Vec<usize>) -> LoopPlan {
    let m = edges.len();
    let mut triangles = Vec::new();
    if m == 3 {
        triangles.push([Slot::Edge(edges[0]), Slot::Edge(edges[1]), Slot::Edge(edges[2])]);
        return LoopPlan { edges, triangles };
    }
    let apex = (0..m).find(|&s| {
        (0..m).all(|j| {
            let adjacent = j == s || j == (s + 1) % m || (j + m - 1) % m == s;
            adjacent || !share_face(edges[s], edges[j])
        })
    });
    match apex {
        Some(s) => {
            for i in 1..m - 1 {
                triangles.push([
                    Slot::Edge(edges[s]),
                    Slot::Edge(edges[(s + i) % m]),
                    Slot::Edge(edges[(s + i + 1) % m]),
                ]);
            }
        }
        None => {
            for i in 0..m {
                triangles.push([Slot::Centroid, Slot::Edge(edges[i]), Slot::Edge(edges[(i + 1) % m])]);
            }
        }
    }
    LoopPlan { edges, triangles }
}

fn case_table() -> &'static [Vec<LoopPlan>] {
    static TABLE: OnceLock<Vec<Vec<LoopPlan>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..256).map(build_case).collect())
}

/// Extracts the `iso` level set of `mask` (inside: value > iso) as a closed,
/// outward-wound triangle mesh in world coordinates. Vertices sit on grid
/// edges at the linearly interpolated crossing.
pub fn marching_cubes(mask: &VoxelMask, iso: f64) -> Result<Mesh, VoxelError> {
    if !iso.is_finite() {
        return Err(VoxelError::InvalidIso(iso));
    }
    if !mask.values().iter().any(|&v| v > iso) {
        return Err(VoxelError::EmptyIsosurface(iso));
    }
    let pad = if 0.0 < iso { 0.0 } else { iso - 1.0 };
    let [nx, ny, nz] = mask.dims();
    let (pnx, pny) = (nx as i64 + 2, ny as i64 + 2);
    let value = |x: i64, y: i64, z: i64| -> f64 {
        if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64 {
            pad
        } else {
            mask.get(x as usize, y as usize, z as usize)
        }
    };
    let (o, s) = (mask.origin(), mask.spacing());
    let world = |x: i64, y: i64, z: i64| -> Vec3 {
        [
            o[0] + x as f64 * s[0],
            o[1] + y as f64 * s[1],
            o[2] + z as f64 * s[2],
        ]
    };

    let table = case_table();
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut edge_vertex: HashMap<u64, usize> = HashMap::new();

    for z in -1..nz as i64 {
        for y in -1..ny as i64 {
            for x in -1..nx as i64 {
                let corner = |c: usize| (x + (c & 1) as i64, y + (c >> 1 & 1) as i64, z + (c >> 2 & 1) as i64);
                let mut vals = [0.0; 8];
                let mut case = 0usize;
                for (c, v) in vals.iter_mut().enumerate() {
                    let (cx, cy, cz) = corner(c);
                    *v = value(cx, cy, cz);
                    if *v > iso {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                for plan in &table[case] {
                    let mut ids = [0usize; 12];
                    for &e in &plan.edges {
                        let [a, b] = EDGES[e];
                        let (ax, ay, az) = corner(a);
                        let axis = match b - a {
                            1 => 0,
                            2 => 1,
                            _ => 2,
                        };
                        let key = ((((az + 1) * pny + (ay + 1)) * pnx + (ax + 1)) * 3 + axis) as u64;
                        ids[e] = *edge_vertex.entry(key).or_insert_with(|| {
                            let (bx, by, bz) = corner(b);
                            let (pa, pb) = (world(ax, ay, az), world(bx, by, bz));
                            let t = (iso - vals[a]) / (vals[b] - vals[a]);
                            vertices.push(vec3::add(pa, vec3::scale(vec3::sub(pb, pa), t)));
                            vertices.len() - 1
                        });
                    }
                    let mut centroid = usize::MAX;
                    if plan.triangles.iter().any(|t| t.contains(&Slot::Centroid)) {
                        let sum = plan
                            .edges
                            .iter()
                            .fold([0.0; 3], |acc, &e| vec3::add(acc, vertices[ids[e]]));
                        vertices.push(vec3::scale(sum, 1.0 / plan.edges.len() as f64));
                        centroid = vertices.len() - 1;
                    }
                    for tri in &plan.triangles {
                        let resolve = |s: Slot| match s {
                            Slot::Edge(e) => ids[e],
                            Slot::Centroid => centroid,
                        };
                        faces.push([resolve(tri[0]), resolve(tri[1]), resolve(tri[2])]);
                    }
                }
            }
        }
    }
    Ok(Mesh::new(vertices, faces)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::validate_manifold;
    use std::collections::HashSet;

    #[test]
    fn every_case_closes_into_loops() {
        for (case, plans) in case_table().iter().enumerate() {
            let crossings: usize = (0..12)
                .filter(|&e| {
                    let [a, b] = EDGES[e];
                    (case >> a & 1) != (case >> b & 1)
                })
                .count();
            let covered: usize = plans.iter().map(|p| p.edges.len()).sum();
            assert_eq!(crossings, covered, "case {case}");
        }
    }

    #[test]
    fn single_voxel_is_closed_sphere_topology() {
        let mut m = VoxelMask::zeros([3, 3, 3], [1.0; 3], [0.0; 3]).unwrap();
        m.set(1, 1, 1, 1.0);
        let mesh = marching_cubes(&m, 0.5).unwrap();
        let r = validate_manifold(&mesh);
        assert!(r.is_closed_manifold);
        assert_eq!(r.euler_characteristic, 2);
        assert!(mesh.signed_volume() > 0.0);
    }

    #[test]
    fn directed_edges_are_used_once_each_way() {
        let mut m = VoxelMask::zeros([4, 4, 4], [1.0; 3], [0.0; 3]).unwrap();
        // checkerboard-ish pattern hits ambiguous faces
        for (i, j, k) in [(1, 1, 1), (2, 2, 1), (1, 2, 2), (2, 1, 2), (3, 3, 3)] {
            m.set(i, j, k, 1.0);
        }
        let mesh = marching_cubes(&m, 0.5).unwrap();
        let mut directed = HashSet::new();
        for f in mesh.faces() {
            for k in 0..3 {
                assert!(directed.insert((f[k], f[(k + 1) % 3])), "duplicate directed edge");
            }
        }
        for &(a, b) in &directed {
            assert!(directed.contains(&(b, a)));
        }
        assert!(validate_manifold(&mesh).is_closed_manifold);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let m = VoxelMask::zeros([3, 3, 3], [1.0; 3], [0.0; 3]).unwrap();
        assert!(matches!(marching_cubes(&m, 0.5), Err(VoxelError::EmptyIsosurface(_))));
    }

    #[test]
    fn border_touching_object_is_capped() {
        let m = VoxelMask::new([2, 2, 2], [1.0; 3], [0.0; 3], vec![1.0; 8]).unwrap();
        let mesh = marching_cubes(&m, 0.5).unwrap();
        assert!(validate_manifold(&mesh).is_closed_manifold);
    }

    #[test]
    fn anisotropic_box_volume() {
        let (dims, spacing) = ([6, 5, 4], [0.5, 1.0, 2.0]);
        let mut m = VoxelMask::zeros(dims, spacing, [0.0; 3]).unwrap();
        for k in 1..3 {
            for j in 1..4 {
                for i in 1..5 {
                    m.set(i, j, k, 1.0);
                }
            }
        }
        let mesh = marching_cubes(&m, 0.5).unwrap();
        let r = validate_manifold(&mesh);
        assert!(r.is_closed_manifold);
        assert_eq!(r.euler_characteristic, 2);
        // box of 4x3x2 voxels, chamfered at half-voxel: volume below the full box
        let full = 4.0 * 0.5 * 3.0 * 1.0 * 2.0 * 2.0;
        assert!(mesh.signed_volume() > 0.5 * full && mesh.signed_volume() < full);
    }
}
