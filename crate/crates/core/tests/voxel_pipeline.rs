use meshgrow::mesh::{shapes, validate_manifold, Mesh};
use meshgrow::voxel::{decimate, marching_cubes, mesh_from_masks, MeshMode, VoxelMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ball(radius: f64, spacing: f64) -> VoxelMask {
    let n = (2.0 * radius / spacing).ceil() as usize + 5;
    let c = (n as f64 - 1.0) * spacing / 2.0;
    VoxelMask::from_fn([n; 3], [spacing; 3], [0.0; 3], |p| {
        let d2 = (p[0] - c).powi(2) + (p[1] - c).powi(2) + (p[2] - c).powi(2);
        if d2 <= radius * radius {
            1.0
        } else {
            0.0
        }
    })
    .unwrap()
}

fn random_blob(rng: &mut ChaCha8Rng) -> VoxelMask {
    let n = rng.random_range(8..20);
    let spacing = [rng.random_range(0.4..1.2), rng.random_range(0.4..1.2), rng.random_range(0.4..1.2)];
    let balls: Vec<([f64; 3], f64)> = (0..rng.random_range(1..5))
        .map(|_| {
            (
                [
                    rng.random_range(0.0..n as f64 * spacing[0]),
                    rng.random_range(0.0..n as f64 * spacing[1]),
                    rng.random_range(0.0..n as f64 * spacing[2]),
                ],
                rng.random_range(0.5..4.0),
            )
        })
        .collect();
    let mut mask = VoxelMask::from_fn([n; 3], spacing, [0.0; 3], |p| {
        let inside = balls.iter().any(|(c, r)| {
            (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2) <= r * r
        });
        f64::from(inside)
    })
    .unwrap();
    // salt noise makes ambiguous configurations common
    for _ in 0..n {
        let (i, j, k) = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n));
        mask.set(i, j, k, 1.0);
    }
    mask
}

#[test]
fn random_blobs_give_watertight_manifolds() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..100 {
        let mask = random_blob(&mut rng);
        let mesh = marching_cubes(&mask, 0.5).unwrap();
        let r = validate_manifold(&mesh);
        assert!(r.is_closed_manifold, "trial {trial}: {r:?}");
        assert_eq!(r.boundary_edge_count, 0);
        assert!(mesh.signed_volume() > 0.0);
    }
}

/// Ball digitized with fractional occupancy (4^3 supersamples per voxel).
fn partial_volume_ball(radius: f64) -> VoxelMask {
    let n = (2.0 * radius).ceil() as usize + 5;
    let c = (n as f64 - 1.0) / 2.0;
    VoxelMask::from_fn([n; 3], [1.0; 3], [0.0; 3], |p| {
        let mut inside = 0;
        for a in 0..4 {
            for b in 0..4 {
                for d in 0..4 {
                    let q = [
                        p[0] - 0.375 + 0.25 * a as f64 - c,
                        p[1] - 0.375 + 0.25 * b as f64 - c,
                        p[2] - 0.375 + 0.25 * d as f64 - c,
                    ];
                    if q[0] * q[0] + q[1] * q[1] + q[2] * q[2] <= radius * radius {
                        inside += 1;
                    }
                }
            }
        }
        inside as f64 / 64.0
    })
    .unwrap()
}

// A binary mask puts every vertex at an edge midpoint, and the resulting
// terraced surface overestimates the area of a radius-10 ball by about 7.4%.
#[test]
fn digitized_sphere_area() {
    let analytic = 4.0 * std::f64::consts::PI * 100.0;
    let binary = marching_cubes(&ball(10.0, 1.0), 0.5).unwrap();
    let rel = (binary.surface_area() - analytic) / analytic;
    println!("binary sphere area {} vs {analytic} (rel {rel:.4})", binary.surface_area());
    assert!(rel > 0.0 && rel < 0.08, "relative area error {rel}");
    let r = validate_manifold(&binary);
    assert!(r.is_closed_manifold);
    assert_eq!(r.euler_characteristic, 2);

    let pv = marching_cubes(&partial_volume_ball(10.0), 0.5).unwrap();
    let rel = (pv.surface_area() - analytic).abs() / analytic;
    println!("partial-volume sphere area {} (rel {rel:.4})", pv.surface_area());
    assert!(rel < 0.05, "relative area error {rel}");
    assert_eq!(validate_manifold(&pv).euler_characteristic, 2);
}

#[test]
fn ball_volume_error_decreases_with_resolution() {
    let radius: f64 = 5.0;
    let analytic = 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3);
    let errors: Vec<f64> = [1.0, 0.5, 0.25]
        .iter()
        .map(|&s| {
            let m = marching_cubes(&ball(radius, s), 0.5).unwrap();
            (m.signed_volume() - analytic).abs() / analytic
        })
        .collect();
    println!("volume errors {errors:?}");
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
}

/// Max over vertices of `a` of the distance to the nearest triangle of `b`.
fn one_sided(a: &Mesh, b: &Mesh) -> f64 {
    a.vertices()
        .iter()
        .map(|&p| {
            (0..b.face_count())
                .map(|f| point_triangle_distance(p, b.face_points(f)))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

fn point_triangle_distance(p: [f64; 3], t: [[f64; 3]; 3]) -> f64 {
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    // Ericson, closest point on triangle
    let (a, b, c) = (t[0], t[1], t[2]);
    let (ab, ac, ap) = (sub(b, a), sub(c, a), sub(p, a));
    let (d1, d2) = (dot(ab, ap), dot(ac, ap));
    let closest = if d1 <= 0.0 && d2 <= 0.0 {
        a
    } else {
        let bp = sub(p, b);
        let (d3, d4) = (dot(ab, bp), dot(ac, bp));
        if d3 >= 0.0 && d4 <= d3 {
            b
        } else {
            let vc = d1 * d4 - d3 * d2;
            if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
                let v = d1 / (d1 - d3);
                [a[0] + v * ab[0], a[1] + v * ab[1], a[2] + v * ab[2]]
            } else {
                let cp = sub(p, c);
                let (d5, d6) = (dot(ab, cp), dot(ac, cp));
                if d6 >= 0.0 && d5 <= d6 {
                    c
                } else {
                    let vb = d5 * d2 - d1 * d6;
                    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
                        let w = d2 / (d2 - d6);
                        [a[0] + w * ac[0], a[1] + w * ac[1], a[2] + w * ac[2]]
                    } else {
                        let va = d3 * d6 - d5 * d4;
                        if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
                            let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
                            [b[0] + w * (c[0] - b[0]), b[1] + w * (c[1] - b[1]), b[2] + w * (c[2] - b[2])]
                        } else {
                            let denom = 1.0 / (va + vb + vc);
                            let (v, w) = (vb * denom, vc * denom);
                            [
                                a[0] + ab[0] * v + ac[0] * w,
                                a[1] + ab[1] * v + ac[1] * w,
                                a[2] + ab[2] * v + ac[2] * w,
                            ]
                        }
                    }
                }
            }
        }
    };
    let d = sub(p, closest);
    dot(d, d).sqrt()
}

#[test]
fn decimation_stays_close_to_original() {
    for radius in [1.0, 7.5] {
        let m = shapes::icosphere(4, radius);
        let d = decimate(&m, 1000).unwrap();
        let h = one_sided(&m, &d).max(one_sided(&d, &m));
        let bound = 2.0 * m.mean_edge_length();
        println!("hausdorff {h} bound {bound}");
        assert!(h < bound);
        assert!(validate_manifold(&d).is_closed_manifold);
    }
}

#[test]
fn marching_cubes_then_decimate_to_roi_budget() {
    let mesh = marching_cubes(&ball(12.0, 0.5), 0.5).unwrap();
    assert!(mesh.edge_count() > 2000);
    let d = decimate(&mesh, 2000).unwrap();
    assert_eq!(d.edge_count(), 1998);
    let r = validate_manifold(&d);
    assert!(r.is_closed_manifold);
    assert_eq!(r.euler_characteristic, 2);
}

#[test]
fn uia_and_roi_mask_pipelines() {
    let lesion = ball(4.0, 0.5);
    let dims = lesion.dims();
    let mid = dims[1] / 2;
    let mut vessels = VoxelMask::zeros(dims, lesion.spacing(), lesion.origin()).unwrap();
    for i in 0..dims[0] {
        for dj in 0..3 {
            for dk in 0..3 {
                vessels.set(i, mid - 1 + dj, mid - 1 + dk, 1.0);
            }
        }
    }
    let uia = mesh_from_masks(None, &lesion, MeshMode::Uia, 20.0, 1000).unwrap();
    assert_eq!(uia.edge_count(), 999);
    assert_eq!(validate_manifold(&uia).euler_characteristic, 2);
    let roi = mesh_from_masks(Some(&vessels), &lesion, MeshMode::Roi, 20.0, 2000).unwrap();
    assert_eq!(roi.edge_count(), 1998);
    assert!(validate_manifold(&roi).is_closed_manifold);
}
