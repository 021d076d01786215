//! Labeled synthetic lesion shapes. Stable samples are smooth perturbed
//! ellipsoids; growing samples add Gaussian blebs and a higher-frequency
//! radial ripple to the same base. ROI samples are rasterized together
//! with parent-vessel tubes and meshed through the voxel pipeline.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{shape_index_curvedness, vertex_curvatures, FeatureError};
use crate::mesh::{save_mesh, shapes, validate_manifold, Mesh, MeshError};
use crate::train::{Label, ManifestRow};
use crate::vec3::{self, Vec3};
use crate::voxel::{decimate, mesh_from_masks, save_mask, MeshMode, VoxelError, VoxelMask};

const MAX_ATTEMPTS: u64 = 8;
const ROI_CUBE_MM: f64 = 20.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("no valid shape after {attempts} attempts: {last}")]
    Exhausted { attempts: u64, last: String },
    #[error(transparent)]
    Voxel(#[from] VoxelError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub growing_fraction: f64,
    pub mode: MeshMode,
    /// Mean lesion radius in mm.
    pub radius_range: [f64; 2],
    /// Per-axis scale factors of the base ellipsoid.
    pub aspect_range: [f64; 2],
    pub bleb_count: [usize; 2],
    /// Bleb height relative to the radius.
    pub bleb_amplitude: [f64; 2],
    /// Angular standard deviation of a bleb, radians.
    pub bleb_width: [f64; 2],
    /// Relative amplitude of the high-frequency ripple on growing shapes.
    pub noise_amplitude: f64,
    /// Relative amplitude of the low-frequency deformation on every shape.
    pub base_noise: f64,
    /// Voxel spacing (mm) for mask rasterization.
    pub voxel_spacing: f64,
    /// Also write voxel masks in uia mode (roi mode always does).
    pub write_masks: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 200,
            growing_fraction: 0.30,
            mode: MeshMode::Uia,
            radius_range: [2.0, 6.0],
            aspect_range: [0.8, 1.2],
            bleb_count: [1, 3],
            bleb_amplitude: [0.12, 0.3],
            bleb_width: [0.2, 0.35],
            noise_amplitude: 0.025,
            base_noise: 0.04,
            voxel_spacing: 0.4,
            write_masks: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: &str| Err(SynthError::Config(m.to_string()));
        let range_ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !(self.growing_fraction > 0.0 && self.growing_fraction < 1.0) {
            return fail("growing_fraction must be in (0, 1)");
        }
        if !range_ok(self.radius_range) || self.radius_range[0] <= 0.0 {
            return fail("radius_range must be positive and ordered");
        }
        if !range_ok(self.aspect_range) || self.aspect_range[0] <= 0.0 {
            return fail("aspect_range must be positive and ordered");
        }
        if self.bleb_count[0] > self.bleb_count[1] {
            return fail("bleb_count must be ordered");
        }
        if !range_ok(self.bleb_amplitude) || self.bleb_amplitude[0] < 0.0 {
            return fail("bleb amplitudes must be >= 0 and ordered");
        }
        if !range_ok(self.bleb_width) || self.bleb_width[0] <= 0.0 {
            return fail("bleb_width must be positive and ordered");
        }
        if !(self.noise_amplitude >= 0.0 && self.base_noise >= 0.0) {
            return fail("noise amplitudes must be >= 0");
        }
        if !(self.voxel_spacing > 0.0) {
            return fail("voxel_spacing must be positive");
        }
        Ok(())
    }

    pub fn edge_budget(&self) -> usize {
        self.mode.default_edge_budget()
    }

    /// Number of growing samples, `n * fraction` rounded to nearest.
    pub fn growing_count(&self) -> usize {
        (self.n_samples as f64 * self.growing_fraction).round() as usize
    }
}

/// A generated sample: the network mesh and, when rasterized, its masks.
#[derive(Debug, Clone)]
pub struct SynthShape {
    pub mesh: Mesh,
    pub lesion: Option<VoxelMask>,
    pub vessels: Option<VoxelMask>,
}

/// One radial cosine wave `amp * cos(freq * pi * (d . axis) + phase)`.
#[derive(Debug, Clone, Copy)]
struct Wave {
    axis: Vec3,
    freq: f64,
    phase: f64,
    amp: f64,
}

#[derive(Debug, Clone, Copy)]
struct Bleb {
    center: Vec3,
    sigma: f64,
    amp: f64,
}

/// Star-shaped surface `x = center + R * rot * diag(axes) * d * rho(d)`.
#[derive(Debug, Clone)]
struct Lesion {
    center: Vec3,
    radius: f64,
    axes: Vec3,
    rot: [[f64; 3]; 3],
    waves: Vec<Wave>,
    blebs: Vec<Bleb>,
}

impl Lesion {
    fn rho(&self, d: Vec3) -> f64 {
        let mut r = 1.0;
        for w in &self.waves {
            r += w.amp * (w.freq * std::f64::consts::PI * vec3::dot(d, w.axis) + w.phase).cos();
        }
        for b in &self.blebs {
            let theta = vec3::angle_between(d, b.center);
            r += b.amp * (-theta * theta / (2.0 * b.sigma * b.sigma)).exp();
        }
        r.max(0.3)
    }

    fn point(&self, d: Vec3) -> Vec3 {
        let rho = self.rho(d) * self.radius;
        let local = [d[0] * self.axes[0] * rho, d[1] * self.axes[1] * rho, d[2] * self.axes[2] * rho];
        vec3::add(self.center, vec3::mat_mul_vec(&self.rot, local))
    }

    fn contains(&self, p: Vec3) -> bool {
        let q = vec3::sub(p, self.center);
        // rot is orthonormal, so its transpose undoes it
        let t = [
            self.rot[0][0] * q[0] + self.rot[1][0] * q[1] + self.rot[2][0] * q[2],
            self.rot[0][1] * q[0] + self.rot[1][1] * q[1] + self.rot[2][1] * q[2],
            self.rot[0][2] * q[0] + self.rot[1][2] * q[1] + self.rot[2][2] * q[2],
        ];
        let u = [
            t[0] / (self.axes[0] * self.radius),
            t[1] / (self.axes[1] * self.radius),
            t[2] / (self.axes[2] * self.radius),
        ];
        let r = vec3::norm(u);
        if r < 1e-12 {
            return true;
        }
        r <= self.rho(vec3::scale(u, 1.0 / r))
    }
}

fn unit_vector<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v: Vec3 = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let n = vec3::norm(v);
        if n > 1e-9 {
            return vec3::scale(v, 1.0 / n);
        }
    }
}

/// Uniform random rotation from a normalized Gaussian quaternion.
fn random_rotation<R: Rng>(rng: &mut R) -> [[f64; 3]; 3] {
    let q: [f64; 4] = loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-9 {
            break q.map(|v| v / n);
        }
    };
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn waves<R: Rng>(rng: &mut R, n: usize, freq: [f64; 2], amp: f64) -> Vec<Wave> {
    (0..n)
        .map(|_| Wave {
            axis: unit_vector(rng),
            freq: uniform(rng, freq),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            amp: amp * rng.random_range(0.5..1.0),
        })
        .collect()
}

/// Draws the lesion. The base shape only uses `base`, so a stable and a
/// growing draw from the same seed share it exactly.
fn draw_lesion(label: Label, cfg: &SynthConfig, base: &mut ChaCha8Rng, extra: &mut ChaCha8Rng) -> Lesion {
    let radius = uniform(base, cfg.radius_range);
    let axes = std::array::from_fn(|_| uniform(base, cfg.aspect_range));
    let rot = random_rotation(base);
    let mut w = waves(base, 3, [0.5, 1.5], cfg.base_noise);
    let center = match cfg.mode {
        MeshMode::Uia => std::array::from_fn(|_| base.random_range(-20.0..20.0)),
        MeshMode::Roi => [0.0; 3],
    };
    let mut blebs = Vec::new();
    if label == Label::Growing {
        let n = extra.random_range(cfg.bleb_count[0]..=cfg.bleb_count[1]);
        for _ in 0..n {
            blebs.push(Bleb {
                center: unit_vector(extra),
                sigma: uniform(extra, cfg.bleb_width),
                amp: uniform(extra, cfg.bleb_amplitude),
            });
        }
        w.extend(waves(extra, 4, [3.0, 5.0], cfg.noise_amplitude));
    }
    Lesion {
        center,
        radius,
        axes,
        rot,
        waves: w,
        blebs,
    }
}

/// Straight tube of radius `r` along the infinite line `p + t * dir`.
#[derive(Debug, Clone, Copy)]
struct Tube {
    p: Vec3,
    dir: Vec3,
    r: f64,
}

impl Tube {
    fn contains(&self, x: Vec3) -> bool {
        let q = vec3::sub(x, self.p);
        let along = vec3::dot(q, self.dir);
        vec3::norm_sq(q) - along * along <= self.r * self.r
    }
}

fn draw_tubes(lesion: &Lesion, base: &mut ChaCha8Rng) -> Vec<Tube> {
    let n = base.random_range(1..=2);
    (0..n)
        .map(|_| {
            // axis passes just inside the lesion surface so the two touch
            let toward = unit_vector(base);
            let surface = lesion.point(toward);
            let p = vec3::add(lesion.center, vec3::scale(vec3::sub(surface, lesion.center), 0.9));
            let mut dir = unit_vector(base);
            dir = vec3::sub(dir, vec3::scale(toward, vec3::dot(dir, toward)));
            let n = vec3::norm(dir);
            let dir = if n > 1e-6 { vec3::scale(dir, 1.0 / n) } else { [toward[1], -toward[0], 0.0] };
            Tube {
                p,
                dir: vec3::normalize(dir),
                r: base.random_range(0.8..1.5),
            }
        })
        .collect()
}

fn rasterize(lesion: &Lesion, tubes: &[Tube], spacing: f64) -> Result<(VoxelMask, VoxelMask), VoxelError> {
    let half = ROI_CUBE_MM / 2.0 + 2.0;
    let n = (2.0 * half / spacing).ceil() as usize + 1;
    let origin = vec3::sub(lesion.center, [half; 3]);
    let dims = [n; 3];
    let lesion_mask = VoxelMask::from_fn(dims, [spacing; 3], origin, |p| {
        if lesion.contains(p) {
            1.0
        } else {
            0.0
        }
    })?;
    let vessel_mask = VoxelMask::from_fn(dims, [spacing; 3], origin, |p| {
        if tubes.iter().any(|t| t.contains(p)) {
            1.0
        } else {
            0.0
        }
    })?;
    Ok((lesion_mask, vessel_mask))
}

fn sphere_mesh(lesion: &Lesion) -> Result<Mesh, MeshError> {
    let base = shapes::icosphere(4, 1.0);
    let vertices = base.vertices().iter().map(|&d| lesion.point(vec3::normalize(d))).collect();
    Mesh::new(vertices, base.faces().to_vec())
}

fn try_shape(label: Label, cfg: &SynthConfig, seed: u64) -> Result<SynthShape, SynthError> {
    let mut base = ChaCha8Rng::seed_from_u64(seed);
    let mut extra = ChaCha8Rng::seed_from_u64(seed);
    extra.set_stream(1);
    let lesion = draw_lesion(label, cfg, &mut base, &mut extra);
    let budget = cfg.edge_budget();
    match cfg.mode {
        MeshMode::Uia => {
            let mesh = decimate(&sphere_mesh(&lesion)?, budget)?;
            let (l, v) = if cfg.write_masks {
                let (l, v) = rasterize(&lesion, &[], cfg.voxel_spacing)?;
                (Some(l), Some(v))
            } else {
                (None, None)
            };
            Ok(SynthShape {
                mesh,
                lesion: l,
                vessels: v,
            })
        }
        MeshMode::Roi => {
            let tubes = draw_tubes(&lesion, &mut base);
            let (l, v) = rasterize(&lesion, &tubes, cfg.voxel_spacing)?;
            let mesh = mesh_from_masks(Some(&v), &l, MeshMode::Roi, ROI_CUBE_MM, budget)?;
            Ok(SynthShape {
                mesh,
                lesion: Some(l),
                vessels: Some(v),
            })
        }
    }
}

/// Generates one sample. Failed draws are retried with derived seeds.
pub fn generate_shape(label: Label, cfg: &SynthConfig, seed: u64) -> Result<SynthShape, SynthError> {
    cfg.validate()?;
    let mut last = String::new();
    for attempt in 0..MAX_ATTEMPTS {
        let s = if attempt == 0 { seed } else { splitmix64(seed ^ attempt) };
        match try_shape(label, cfg, s) {
            Ok(shape) => {
                let report = validate_manifold(&shape.mesh);
                if report.is_closed_manifold && shape.mesh.edge_count() == crate::nn::reachable_edges(cfg.edge_budget()) {
                    return Ok(shape);
                }
                last = format!("invalid mesh: {report:?}");
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(SynthError::Exhausted {
        attempts: MAX_ATTEMPTS,
        last,
    })
}

/// SplitMix64 finalizer, used to derive independent per-sample seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sample_seed(master: u64, index: usize) -> u64 {
    splitmix64(master.wrapping_add(splitmix64(index as u64)))
}

/// Labels for a dataset: exactly [`SynthConfig::growing_count`] growing,
/// placed by a seeded shuffle.
pub fn dataset_labels(cfg: &SynthConfig) -> Vec<Label> {
    let mut labels = vec![Label::Stable; cfg.n_samples];
    for l in labels.iter_mut().take(cfg.growing_count()) {
        *l = Label::Growing;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    labels.shuffle(&mut rng);
    labels
}

/// Writes meshes (OBJ), optional masks and `manifest.csv` under `out`.
/// Returns the manifest rows.
pub fn generate_dataset(cfg: &SynthConfig, out: &Path) -> Result<Vec<ManifestRow>, SynthError> {
    cfg.validate()?;
    if cfg.n_samples == 0 {
        return Err(SynthError::Config("n_samples must be positive".into()));
    }
    let labels = dataset_labels(cfg);
    std::fs::create_dir_all(out.join("meshes"))?;
    let rows: Vec<ManifestRow> = labels
        .par_iter()
        .enumerate()
        .map(|(i, &label)| {
            let shape = generate_shape(label, cfg, sample_seed(cfg.seed, i))?;
            let name = format!("sample_{i:04}");
            let rel = PathBuf::from("meshes").join(format!("{name}.obj"));
            save_mesh(&shape.mesh, out.join(&rel))?;
            if let (Some(l), Some(v)) = (&shape.lesion, &shape.vessels) {
                save_mask(l, out.join("masks"), &format!("{name}_lesion"))?;
                save_mask(v, out.join("masks"), &format!("{name}_vessels"))?;
            }
            Ok(ManifestRow {
                mesh_path: rel.to_string_lossy().replace('\\', "/"),
                label,
                group_id: Some(name),
            })
        })
        .collect::<Result<_, SynthError>>()?;
    crate::train::write_manifest(&out.join("manifest.csv"), &rows)?;
    std::fs::write(out.join("synth_config.json"), serde_json::to_string_pretty(cfg)?)?;
    Ok(rows)
}

/// Mean vertex curvedness, the single-number baseline score.
pub fn mean_curvedness(mesh: &Mesh) -> Result<f64, FeatureError> {
    let (_, c) = shape_index_curvedness(&vertex_curvatures(mesh)?);
    Ok(c.iter().sum::<f64>() / c.len() as f64)
}
