use std::ffi::{CStr, CString};
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use meshgrow::features::{apply_normalization, assemble_features_with, FeatureNormStats, FeatureOptions};
use meshgrow::mesh::shapes::icosphere;
use meshgrow::nn::gradcheck::test_config;
use meshgrow::nn::{save_checkpoint, Adam, Checkpoint, EdgeMesh, Network, RngState};
use meshgrow::voxel::decimate;
use meshgrow_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mg_last_error()) }.to_string_lossy().into_owned()
}

fn sphere_handle(level: u32) -> *mut MgMesh {
    let m = icosphere(level, 1.5);
    let v: Vec<f64> = m.vertices().iter().flatten().copied().collect();
    let f: Vec<u32> = m.faces().iter().flatten().map(|&i| i as u32).collect();
    let mut out = ptr::null_mut();
    let s = unsafe { mg_mesh_new(v.as_ptr(), m.vertex_count(), f.as_ptr(), m.face_count(), &mut out) };
    assert_eq!(s, MgStatus::Ok);
    assert!(!out.is_null());
    out
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(mg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn mesh_counts_features_and_decimation() {
    let m = sphere_handle(2);
    let (mut nv, mut nf, mut ne) = (0, 0, 0);
    assert_eq!(unsafe { mg_mesh_counts(m, &mut nv, &mut nf, &mut ne) }, MgStatus::Ok);
    assert_eq!((nv, nf, ne), (162, 320, 480));
    assert_eq!(unsafe { mg_mesh_counts(m, ptr::null_mut(), ptr::null_mut(), &mut ne) }, MgStatus::Ok);

    let (mut c, mut e) = (0, 0);
    let s = unsafe { mg_features(m, true, false, ptr::null_mut(), 0, &mut c, &mut e) };
    assert_eq!((s, c, e), (MgStatus::Ok, 10, 480));
    let mut small = vec![0.0; 10];
    let s = unsafe { mg_features(m, true, false, small.as_mut_ptr(), small.len(), &mut c, &mut e) };
    assert_eq!(s, MgStatus::BufferTooSmall);
    assert!(last_error().contains("4800"), "{}", last_error());
    let mut buf = vec![0.0; c * e];
    let s = unsafe { mg_features(m, true, false, buf.as_mut_ptr(), buf.len(), &mut c, &mut e) };
    assert_eq!(s, MgStatus::Ok);
    assert_eq!(last_error(), "");
    let expected = assemble_features_with(
        &icosphere(2, 1.5),
        &FeatureOptions {
            with_coords: true,
            center_coords: false,
        },
    )
    .unwrap();
    assert_eq!(buf, expected.iter().copied().collect::<Vec<_>>());

    let mut d = ptr::null_mut();
    assert_eq!(unsafe { mg_mesh_decimate(m, 150, &mut d) }, MgStatus::Ok);
    assert_eq!(unsafe { mg_mesh_counts(d, ptr::null_mut(), ptr::null_mut(), &mut ne) }, MgStatus::Ok);
    assert_eq!(ne, 150);
    unsafe {
        mg_mesh_free(d);
        mg_mesh_free(m);
        mg_mesh_free(ptr::null_mut());
    }
}

#[test]
fn save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("s.off").to_str().unwrap()).unwrap();
    let m = sphere_handle(1);
    assert_eq!(unsafe { mg_mesh_save(m, path.as_ptr()) }, MgStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { mg_mesh_load(path.as_ptr(), &mut back) }, MgStatus::Ok);
    let mut ne = 0;
    unsafe { mg_mesh_counts(back, ptr::null_mut(), ptr::null_mut(), &mut ne) };
    assert_eq!(ne, 120);
    unsafe {
        mg_mesh_free(back);
        mg_mesh_free(m);
    }
}

#[test]
fn errors_are_reported() {
    let mut out = ptr::null_mut();
    let missing = CString::new("/nonexistent/mesh.obj").unwrap();
    assert_eq!(unsafe { mg_mesh_load(missing.as_ptr(), &mut out) }, MgStatus::Mesh);
    assert!(out.is_null());
    assert!(last_error().contains("/nonexistent/mesh.obj"));
    assert_eq!(unsafe { mg_mesh_load(ptr::null(), &mut out) }, MgStatus::NullPointer);
    assert_eq!(
        unsafe { mg_mesh_counts(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) },
        MgStatus::NullPointer
    );
    // face index out of range
    let v = [0.0f64; 9];
    let f = [0u32, 1, 7];
    assert_eq!(unsafe { mg_mesh_new(v.as_ptr(), 3, f.as_ptr(), 1, &mut out) }, MgStatus::Mesh);
    let mut p = 0.0;
    assert_eq!(unsafe { mg_model_predict(ptr::null(), ptr::null(), &mut p) }, MgStatus::NullPointer);
}

#[test]
fn model_predicts_like_the_library() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = test_config(7);
    let network = Network::new(config, &mut rng).unwrap();
    let adam = Adam::new(network.params.len(), 1e-3);
    let mut stats = FeatureNormStats::identity(7);
    stats.mean[0] = 2.5;
    let ck = Checkpoint {
        network,
        feature_options: FeatureOptions::default(),
        norm_stats: stats,
        optimizer: adam,
        rng: RngState::capture(&rng),
        epoch: 3,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &ck).unwrap();

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { mg_model_load(cpath.as_ptr(), &mut model) }, MgStatus::Ok);
    let mut edges = 0;
    assert_eq!(unsafe { mg_model_input_edges(model, &mut edges) }, MgStatus::Ok);
    assert_eq!(edges, 150);

    let m = sphere_handle(2);
    let mut prob = -1.0;
    assert_eq!(unsafe { mg_model_predict(model, m, &mut prob) }, MgStatus::Model);
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { mg_mesh_decimate(m, edges, &mut d) }, MgStatus::Ok);
    assert_eq!(unsafe { mg_model_predict(model, d, &mut prob) }, MgStatus::Ok);

    let mesh = decimate(&icosphere(2, 1.5), 150).unwrap();
    let x = apply_normalization(&assemble_features_with(&mesh, &FeatureOptions::default()).unwrap(), &ck.norm_stats).unwrap();
    let em = EdgeMesh::new(mesh).unwrap();
    let expected = ck.network.predict_proba(&[(&em, &x)]).unwrap()[0];
    assert_eq!(prob, expected);
    assert!((0.0..=1.0).contains(&prob));
    unsafe {
        mg_mesh_free(d);
        mg_mesh_free(m);
        mg_model_free(model);
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/meshgrow.h");
    for f in [
        "mg_last_error",
        "mg_version",
        "mg_mesh_load",
        "mg_mesh_new",
        "mg_mesh_free",
        "mg_mesh_counts",
        "mg_mesh_save",
        "mg_mesh_decimate",
        "mg_features",
        "mg_model_load",
        "mg_model_free",
        "mg_model_input_edges",
        "mg_model_predict",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/meshgrow.h");
    let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .output()
    else {
        eprintln!("no C compiler; skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
