use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::geometric::checked_area2;
use super::FeatureError;
use crate::mesh::Mesh;
use crate::vec3::{self, Vec3};

/// Principal curvatures per vertex, `k1 >= k2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexCurvatures {
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
}

impl VertexCurvatures {
    pub fn mean(&self, v: usize) -> f64 {
        0.5 * (self.k1[v] + self.k2[v])
    }

    pub fn gaussian(&self, v: usize) -> f64 {
        self.k1[v] * self.k2[v]
    }

    pub fn len(&self) -> usize {
        self.k1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k1.is_empty()
    }
}

/// Per-vertex quantities of the discrete operators.
pub(crate) struct DiscreteOperators {
    /// Cotangent Laplacian of the position, sum_j (cot a + cot b)(x_i - x_j).
    pub laplacian: Vec<Vec3>,
    /// Mixed Voronoi area.
    pub area: Vec<f64>,
    /// 2 pi minus the sum of incident angles.
    pub angle_deficit: Vec<f64>,
    /// Area-weighted vertex normal (unnormalized).
    pub normal: Vec<Vec3>,
}

fn corner_angle(at: Vec3, a: Vec3, b: Vec3) -> f64 {
    vec3::angle_between(vec3::sub(a, at), vec3::sub(b, at))
}

pub(crate) fn discrete_operators(mesh: &Mesh) -> Result<DiscreteOperators, FeatureError> {
    let n = mesh.vertex_count();
    let mut laplacian = vec![[0.0; 3]; n];
    let mut area = vec![0.0; n];
    let mut angle_sum = vec![0.0; n];
    let mut normal = vec![[0.0; 3]; n];

    for (f, &face) in mesh.faces().iter().enumerate() {
        let area2 = checked_area2(mesh, f)?;
        let tri_area = 0.5 * area2;
        let p = face.map(|v| mesh.vertex(v));
        let angles = [
            corner_angle(p[0], p[1], p[2]),
            corner_angle(p[1], p[2], p[0]),
            corner_angle(p[2], p[0], p[1]),
        ];
        let fnormal = mesh.face_normal_raw(f);
        for k in 0..3 {
            let (i, j, l) = (k, (k + 1) % 3, (k + 2) % 3);
            angle_sum[face[i]] += angles[i];
            normal[face[i]] = vec3::add(normal[face[i]], fnormal);

            // edge (j, l) is opposite corner i
            let d = vec3::sub(p[j], p[l]);
            let cot = vec3::dot(vec3::sub(p[j], p[i]), vec3::sub(p[l], p[i])) / area2;
            laplacian[face[j]] = vec3::add(laplacian[face[j]], vec3::scale(d, cot));
            laplacian[face[l]] = vec3::sub(laplacian[face[l]], vec3::scale(d, cot));
        }

        let obtuse = angles.iter().position(|&a| a > PI / 2.0);
        for i in 0..3 {
            area[face[i]] += match obtuse {
                Some(o) if o == i => tri_area / 2.0,
                Some(_) => tri_area / 4.0,
                None => {
                    let (j, l) = ((i + 1) % 3, (i + 2) % 3);
                    let cot_j = 1.0 / angles[j].tan();
                    let cot_l = 1.0 / angles[l].tan();
                    (vec3::norm_sq(vec3::sub(p[i], p[l])) * cot_j
                        + vec3::norm_sq(vec3::sub(p[i], p[j])) * cot_l)
                        / 8.0
                }
            };
        }
    }

    for (v, &a) in area.iter().enumerate() {
        if !(a > 0.0) {
            return Err(FeatureError::DegenerateVertex { vertex: v });
        }
    }
    Ok(DiscreteOperators {
        laplacian,
        area,
        angle_deficit: angle_sum.into_iter().map(|s| 2.0 * PI - s).collect(),
        normal,
    })
}

/// Principal curvatures from the cotangent mean-curvature normal and the
/// angle deficit, both divided by the mixed Voronoi area.
pub fn vertex_curvatures(mesh: &Mesh) -> Result<VertexCurvatures, FeatureError> {
    let ops = discrete_operators(mesh)?;
    let n = mesh.vertex_count();
    let mut k1 = Vec::with_capacity(n);
    let mut k2 = Vec::with_capacity(n);
    for v in 0..n {
        let a = ops.area[v];
        // mean curvature normal is 2 H n
        let hn = vec3::scale(ops.laplacian[v], 1.0 / (2.0 * a));
        let h_abs = 0.5 * vec3::norm(hn);
        let h = if vec3::dot(hn, ops.normal[v]) < 0.0 {
            -h_abs
        } else {
            h_abs
        };
        let k = ops.angle_deficit[v] / a;
        let disc = (h * h - k).max(0.0).sqrt();
        k1.push(h + disc);
        k2.push(h - disc);
    }
    Ok(VertexCurvatures { k1, k2 })
}

/// Shape index in [-1, 1] and curvedness >= 0 per vertex. Umbilics get
/// `sign(H)`, flat points get 0.
pub fn shape_index_curvedness(curv: &VertexCurvatures) -> (Vec<f64>, Vec<f64>) {
    curv.k1
        .iter()
        .zip(&curv.k2)
        .map(|(&k1, &k2)| {
            let c = ((k1 * k1 + k2 * k2) / 2.0).sqrt();
            let si = if c < 1e-12 {
                0.0
            } else if (k1 - k2).abs() < 1e-9 * c.max(1.0) {
                let h = k1 + k2;
                if h > 0.0 {
                    1.0
                } else if h < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            } else {
                (2.0 / PI) * ((k1 + k2) / (k1 - k2)).atan()
            };
            (si, c)
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn icosphere_principal_curvatures() {
        let c = vertex_curvatures(&shapes::icosphere(3, 5.0)).unwrap();
        for k in [&c.k1, &c.k2] {
            let m = mean(k);
            assert!((m - 0.2).abs() / 0.2 < 0.05, "mean curvature {m}");
        }
        for v in 0..c.len() {
            assert!(c.k1[v] >= c.k2[v]);
        }
    }

    #[test]
    fn gauss_bonnet() {
        for m in [shapes::tetrahedron(), shapes::icosahedron(), shapes::icosphere(3, 2.5)] {
            let ops = discrete_operators(&m).unwrap();
            let total: f64 = ops.angle_deficit.iter().sum();
            assert!((total - 4.0 * PI).abs() < 1e-9, "{total}");
        }
    }

    #[test]
    fn mixed_areas_tile_the_surface() {
        let m = shapes::icosphere(2, 3.0);
        let ops = discrete_operators(&m).unwrap();
        let total: f64 = ops.area.iter().sum();
        assert!((total - m.surface_area()).abs() < 1e-9 * total);
    }

    #[test]
    fn curvature_scales_inversely() {
        let m = shapes::icosphere(2, 1.0);
        let s = 2.5;
        let a = vertex_curvatures(&m).unwrap();
        let b = vertex_curvatures(&m.map_vertices(|p| vec3::scale(p, s))).unwrap();
        for v in 0..a.len() {
            for (x, y) in [(a.k1[v], b.k1[v]), (a.k2[v], b.k2[v])] {
                assert!((x / s - y).abs() <= 1e-9 * x.abs().max(1e-300), "{x} {y}");
            }
        }
    }

    fn si_c(k1: f64, k2: f64) -> (f64, f64) {
        let (si, c) = shape_index_curvedness(&VertexCurvatures {
            k1: vec![k1],
            k2: vec![k2],
        });
        (si[0], c[0])
    }

    #[test]
    fn shape_index_cases() {
        let r = 4.0;
        assert_eq!(si_c(1.0 / r, 1.0 / r), (1.0, 1.0 / r));
        assert_eq!(si_c(-1.0 / r, -1.0 / r).0, -1.0);
        let (si, c) = si_c(1.0 / r, 0.0);
        assert!((si - 0.5).abs() < 1e-15);
        assert!((c - 1.0 / (r * 2f64.sqrt())).abs() < 1e-15);
        assert_eq!(si_c(0.3, -0.3).0, 0.0);
        assert_eq!(si_c(0.0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn outward_sphere_is_convex() {
        let c = vertex_curvatures(&shapes::icosphere(3, 5.0)).unwrap();
        let (si, curvedness) = shape_index_curvedness(&c);
        // H^2 - K clamps to zero at every vertex, so each one is umbilic
        assert!(si.iter().all(|&s| s == 1.0));
        for c in curvedness {
            assert!((c - 0.2).abs() / 0.2 < 0.05);
        }
    }
}
