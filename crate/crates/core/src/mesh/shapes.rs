//! Closed reference meshes: regular tetrahedron, icosahedron, icospheres.

use std::collections::HashMap;

use super::Mesh;
use crate::vec3::{self, Vec3};

/// Regular tetrahedron inscribed in the cube [-1, 1]^3, outward winding.
pub fn tetrahedron() -> Mesh {
    Mesh::new(
        vec![
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ],
        vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
    )
    .expect("static mesh")
}

/// Unit-circumradius icosahedron, outward winding.
pub fn icosahedron() -> Mesh {
    let (v, f) = icosahedron_raw();
    Mesh::new(v, f).expect("static mesh")
}

fn icosahedron_raw() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let v: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|&p| vec3::normalize(p))
    .collect();
    let f = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (v, f)
}

/// Icosahedron subdivided `level` times (each face into four), vertices
/// projected onto the sphere of the given radius. Has `30 * 4^level` edges.
pub fn icosphere(level: u32, radius: f64) -> Mesh {
    let (mut v, mut f) = icosahedron_raw();
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(f.len() * 4);
        let mut mid = |a: usize, b: usize, v: &mut Vec<Vec3>| -> usize {
            let key = if a < b { (a, b) } else { (b, a) };
            *cache.entry(key).or_insert_with(|| {
                v.push(vec3::normalize(vec3::midpoint(v[a], v[b])));
                v.len() - 1
            })
        };
        for &[a, b, c] in &f {
            let ab = mid(a, b, &mut v);
            let bc = mid(b, c, &mut v);
            let ca = mid(c, a, &mut v);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        f = next;
    }
    let v = v.into_iter().map(|p| vec3::scale(p, radius)).collect();
    Mesh::new(v, f).expect("subdivision preserves validity")
}
