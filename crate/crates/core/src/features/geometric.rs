use std::f64::consts::PI;

use ndarray::Array2;

use super::FeatureError;
use crate::mesh::Mesh;
use crate::vec3::{self, Vec3};

/// Twice the area of a triangle, or an error when it is degenerate relative
/// to its own size.
pub(crate) fn checked_area2(mesh: &Mesh, f: usize) -> Result<f64, FeatureError> {
    let [p, q, r] = mesh.face_points(f);
    let area2 = vec3::norm(mesh.face_normal_raw(f));
    let perimeter_sq = vec3::norm_sq(vec3::sub(q, p))
        + vec3::norm_sq(vec3::sub(r, q))
        + vec3::norm_sq(vec3::sub(p, r));
    if !(area2 > 1e-14 * perimeter_sq) {
        return Err(FeatureError::DegenerateFace { face: f });
    }
    Ok(area2)
}

fn opposite_vertex(face: [usize; 3], u: usize, v: usize) -> usize {
    face.into_iter()
        .find(|&w| w != u && w != v)
        .expect("face contains the edge")
}

fn sorted2(a: f64, b: f64) -> [f64; 2] {
    if a <= b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Per edge: dihedral angle, the two opposite inner angles (ascending) and
/// the two height/base ratios (ascending). Rows follow that order.
pub fn geometric_edge_features(mesh: &Mesh) -> Result<Array2<f64>, FeatureError> {
    for f in 0..mesh.face_count() {
        checked_area2(mesh, f)?;
    }
    let mut out = Array2::zeros((5, mesh.edge_count()));
    for (e, &[u, v]) in mesh.edges().iter().enumerate() {
        let faces = mesh.edge_faces(e);
        if faces.len() != 2 {
            return Err(FeatureError::NotClosedManifold { edge: e });
        }
        let (pu, pv) = (mesh.vertex(u), mesh.vertex(v));
        let base = vec3::sub(pv, pu);
        let base_sq = vec3::norm_sq(base);

        let mut angles = [0.0; 2];
        let mut ratios = [0.0; 2];
        let mut normals: [Vec3; 2] = [[0.0; 3]; 2];
        for (slot, &f) in faces.iter().enumerate() {
            let w = mesh.vertex(opposite_vertex(mesh.faces()[f], u, v));
            angles[slot] = vec3::angle_between(vec3::sub(pu, w), vec3::sub(pv, w));
            // |base x (w - u)| is twice the area = base * height
            ratios[slot] = vec3::norm(vec3::cross(base, vec3::sub(w, pu))) / base_sq;
            normals[slot] = mesh.face_normal_raw(f);
        }
        let dihedral = PI - vec3::angle_between(normals[0], normals[1]);
        let angles = sorted2(angles[0], angles[1]);
        let ratios = sorted2(ratios[0], ratios[1]);
        out[[0, e]] = dihedral;
        out[[1, e]] = angles[0];
        out[[2, e]] = angles[1];
        out[[3, e]] = ratios[0];
        out[[4, e]] = ratios[1];
    }
    Ok(out)
}

/// Per edge, the mean of its endpoint values.
pub fn vertex_to_edge(values: &[f64], mesh: &Mesh) -> Vec<f64> {
    assert_eq!(values.len(), mesh.vertex_count(), "one value per vertex");
    mesh.edges()
        .iter()
        .map(|&[a, b]| 0.5 * (values[a] + values[b]))
        .collect()
}

/// 3 x E matrix of edge midpoints in world coordinates.
pub fn edge_midpoints(mesh: &Mesh) -> Array2<f64> {
    let mut out = Array2::zeros((3, mesh.edge_count()));
    for (e, &[a, b]) in mesh.edges().iter().enumerate() {
        let m = vec3::midpoint(mesh.vertex(a), mesh.vertex(b));
        for k in 0..3 {
            out[[k, e]] = m[k];
        }
    }
    out
}
