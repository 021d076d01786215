//! C interface to the meshgrow library.
//!
//! Objects are opaque handles created by `mg_*_load`/`mg_*_new` calls and
//! released with the matching `mg_*_free`. Every fallible call returns an
//! [`MgStatus`]; on failure a message is kept per thread and can be read
//! with [`mg_last_error`]. Panics are caught at the boundary and reported as
//! [`MgStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use meshgrow::features::{apply_normalization, assemble_features_with, FeatureOptions};
use meshgrow::mesh::{load_mesh, save_mesh, Mesh};
use meshgrow::nn::{load_checkpoint, Checkpoint, EdgeMesh};
use meshgrow::voxel::decimate;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Mesh = 4,
    Feature = 5,
    Model = 6,
    BufferTooSmall = 7,
    Panic = 99,
}

/// Triangle mesh handle.
pub struct MgMesh(Mesh);

/// Trained model handle: network plus the feature options and normalization
/// it was trained with.
pub struct MgModel(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl std::fmt::Display) {
    let s = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).expect("nul bytes removed"));
}

struct Fail(MgStatus, String);

impl Fail {
    fn new(status: MgStatus, msg: impl std::fmt::Display) -> Self {
        Fail(status, msg.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MgStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            MgStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::new(MgStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Fail::new(MgStatus::InvalidArgument, "path is not valid UTF-8"))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail::new(MgStatus::NullPointer, format!("{what} handle is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| Fail::new(MgStatus::NullPointer, format!("{what} is null")))
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next `mg_*` call on the same thread.
#[no_mangle]
pub extern "C" fn mg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads an OBJ or OFF file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mg_mesh_load(path: *const c_char, out: *mut *mut MgMesh) -> MgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = path_arg(path)?;
        let m = load_mesh(&path).map_err(|e| Fail::new(MgStatus::Mesh, format!("{}: {e}", path.display())))?;
        *out = Box::into_raw(Box::new(MgMesh(m)));
        Ok(())
    })
}

/// Builds a mesh from `n_vertices` xyz triples and `n_faces` index triples.
///
/// # Safety
/// `vertices` must hold `3 * n_vertices` doubles, `faces` `3 * n_faces`
/// indices, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_mesh_new(
    vertices: *const f64,
    n_vertices: usize,
    faces: *const u32,
    n_faces: usize,
    out: *mut *mut MgMesh,
) -> MgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if vertices.is_null() || faces.is_null() {
            return Err(Fail::new(MgStatus::NullPointer, "vertex or face array is null"));
        }
        let v = std::slice::from_raw_parts(vertices, 3 * n_vertices);
        let f = std::slice::from_raw_parts(faces, 3 * n_faces);
        let verts = v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let tris = f
            .chunks_exact(3)
            .map(|c| [c[0] as usize, c[1] as usize, c[2] as usize])
            .collect();
        let m = Mesh::new(verts, tris).map_err(|e| Fail::new(MgStatus::Mesh, e))?;
        *out = Box::into_raw(Box::new(MgMesh(m)));
        Ok(())
    })
}

/// # Safety
/// `mesh` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn mg_mesh_free(mesh: *mut MgMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Vertex, face and edge counts; any output pointer may be null.
///
/// # Safety
/// `mesh` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_mesh_counts(
    mesh: *const MgMesh,
    vertices: *mut usize,
    faces: *mut usize,
    edges: *mut usize,
) -> MgStatus {
    guard(|| {
        let m = &handle(mesh, "mesh")?.0;
        for (p, v) in [(vertices, m.vertex_count()), (faces, m.face_count()), (edges, m.edge_count())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Writes the mesh; the format follows the extension (.obj or .off).
///
/// # Safety
/// `mesh` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mg_mesh_save(mesh: *const MgMesh, path: *const c_char) -> MgStatus {
    guard(|| {
        let m = &handle(mesh, "mesh")?.0;
        let path = path_arg(path)?;
        save_mesh(m, &path).map_err(|e| Fail::new(MgStatus::Io, format!("{}: {e}", path.display())))
    })
}

/// Edge-collapse decimation of a closed manifold to at most
/// `target_edges` edges; the result is a new handle.
///
/// # Safety
/// `mesh` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mg_mesh_decimate(
    mesh: *const MgMesh,
    target_edges: usize,
    out: *mut *mut MgMesh,
) -> MgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m = &handle(mesh, "mesh")?.0;
        let d = decimate(m, target_edges).map_err(|e| Fail::new(MgStatus::Mesh, e))?;
        *out = Box::into_raw(Box::new(MgMesh(d)));
        Ok(())
    })
}

/// Per-edge input features, row-major `channels x edges`.
///
/// `*channels` and `*edges` always receive the shape. With `buffer` null
/// only the shape is reported; otherwise `capacity` must be at least
/// `channels * edges`.
///
/// # Safety
/// `mesh` must be a live handle, `channels`/`edges` writable, and a
/// non-null `buffer` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn mg_features(
    mesh: *const MgMesh,
    with_coords: bool,
    center_coords: bool,
    buffer: *mut f64,
    capacity: usize,
    channels: *mut usize,
    edges: *mut usize,
) -> MgStatus {
    guard(|| {
        let m = &handle(mesh, "mesh")?.0;
        let channels = out_ptr(channels, "channels")?;
        let edges = out_ptr(edges, "edges")?;
        let opts = FeatureOptions {
            with_coords,
            center_coords,
        };
        let f = assemble_features_with(m, &opts).map_err(|e| Fail::new(MgStatus::Feature, e))?;
        *channels = f.nrows();
        *edges = f.ncols();
        if buffer.is_null() {
            return Ok(());
        }
        if capacity < f.len() {
            return Err(Fail::new(
                MgStatus::BufferTooSmall,
                format!("need {} doubles, buffer holds {capacity}", f.len()),
            ));
        }
        let dst = std::slice::from_raw_parts_mut(buffer, f.len());
        for (d, s) in dst.iter_mut().zip(f.iter()) {
            *d = *s;
        }
        Ok(())
    })
}

/// Loads a checkpoint written by `meshgrow train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mg_model_load(path: *const c_char, out: *mut *mut MgModel) -> MgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = path_arg(path)?;
        let ck = load_checkpoint(&path).map_err(|e| Fail::new(MgStatus::Model, format!("{}: {e}", path.display())))?;
        *out = Box::into_raw(Box::new(MgModel(ck)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn mg_model_free(model: *mut MgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Edge count the model expects its input meshes to have.
///
/// # Safety
/// `model` must be a live handle and `edges` writable.
#[no_mangle]
pub unsafe extern "C" fn mg_model_input_edges(model: *const MgModel, edges: *mut usize) -> MgStatus {
    guard(|| {
        let ck = &handle(model, "model")?.0;
        *out_ptr(edges, "edges")? = meshgrow::nn::reachable_edges(ck.network.config.input_edges);
        Ok(())
    })
}

/// Probability that `mesh` belongs to the growing class. The mesh must
/// have exactly the model's input edge count (see `mg_model_input_edges`).
///
/// # Safety
/// Both handles must be live and `probability` writable.
#[no_mangle]
pub unsafe extern "C" fn mg_model_predict(
    model: *const MgModel,
    mesh: *const MgMesh,
    probability: *mut f64,
) -> MgStatus {
    guard(|| {
        let ck = &handle(model, "model")?.0;
        let m = &handle(mesh, "mesh")?.0;
        let probability = out_ptr(probability, "probability")?;
        let raw = assemble_features_with(m, &ck.feature_options).map_err(|e| Fail::new(MgStatus::Feature, e))?;
        let x = apply_normalization(&raw, &ck.norm_stats).map_err(|e| Fail::new(MgStatus::Feature, e))?;
        let em = EdgeMesh::new(m.clone()).map_err(|e| Fail::new(MgStatus::Mesh, e))?;
        let p = ck
            .network
            .predict_proba(&[(&em, &x)])
            .map_err(|e| Fail::new(MgStatus::Model, e))?;
        *probability = p[0];
        Ok(())
    })
}
