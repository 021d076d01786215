//! Central finite-difference checks of every backward pass.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conv::{edge_conv_backward, edge_conv_forward};
use super::norm::{batch_norm_backward, batch_norm_forward};
use super::pool::mesh_pool;
use super::{weighted_cross_entropy, EdgeMesh, Mode, ModelConfig, Network, NnError};
use crate::features::{apply_normalization, assemble_features, fit_normalization};
use crate::mesh::{shapes, Mesh};
use crate::voxel::decimate;

pub const STEP: f64 = 1e-6;
pub const LAYER_TOLERANCE: f64 = 1e-4;
pub const END_TO_END_TOLERANCE: f64 = 1e-3;
/// Gradient magnitudes below this count as zero in the relative error.
pub const ERROR_FLOOR: f64 = 1e-7;
pub const MESH_EDGES: usize = 150;
pub const MAX_SKIPPED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckEntry {
    pub name: String,
    pub checked: usize,
    /// Coordinates left out because the perturbation changed branch.
    #[serde(default)]
    pub skipped: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradcheckEntry {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    /// Isolated layers, with respect to their inputs and parameters.
    pub layers: Vec<GradcheckEntry>,
    /// Full network loss, one entry per parameter tensor.
    pub end_to_end: Vec<GradcheckEntry>,
}

impl GradcheckReport {
    /// Every entry within tolerance and at most [`MAX_SKIPPED_FRACTION`] of
    /// the end-to-end coordinates skipped.
    pub fn passed(&self) -> bool {
        self.layers.iter().chain(&self.end_to_end).all(|e| e.passed())
            && self.skipped_fraction() <= MAX_SKIPPED_FRACTION
    }

    pub fn skipped_fraction(&self) -> f64 {
        let skipped: usize = self.end_to_end.iter().map(|e| e.skipped).sum();
        let total: usize = self.end_to_end.iter().map(|e| e.checked + e.skipped).sum();
        skipped as f64 / total.max(1) as f64
    }

    pub fn max_layer_error(&self) -> f64 {
        self.layers.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    pub fn max_end_to_end_error(&self) -> f64 {
        self.end_to_end.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }
}

/// Largest `|a - n| / max(|a|, |n|, ERROR_FLOOR)` over all entries.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(ERROR_FLOOR))
        .fold(0.0, f64::max)
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn finite_differences<F>(x: &[f64], f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut p = x.to_vec();
            p[i] = x[i] + STEP;
            let up = f(&p);
            p[i] = x[i] - STEP;
            let down = f(&p);
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn entry(name: &str, analytic: &[f64], numeric: &[f64], tolerance: f64) -> GradcheckEntry {
    GradcheckEntry {
        name: name.to_string(),
        checked: analytic.len(),
        skipped: 0,
        max_rel_error: relative_error(analytic, numeric),
        tolerance,
    }
}

fn inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a * b).sum()
}

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
}

fn flat(m: &Array2<f64>) -> Vec<f64> {
    m.iter().copied().collect()
}

fn unflat(v: &[f64], shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_vec(shape, v.to_vec()).expect("shape")
}

/// A small closed mesh with exactly [`MESH_EDGES`] edges and jittered
/// vertices.
pub fn test_mesh(rng: &mut ChaCha8Rng) -> Result<EdgeMesh, NnError> {
    let base = shapes::icosphere(2, 1.0);
    let vertices = base
        .vertices()
        .iter()
        .map(|p| {
            let s = 1.0 + 0.15 * rng.random_range(-1.0..1.0);
            [p[0] * s, p[1] * s * 0.8, p[2] * s * 1.2]
        })
        .collect();
    let jittered = Mesh::new(vertices, base.faces().to_vec())?;
    let mesh: Mesh = decimate(&jittered, MESH_EDGES)
        .map_err(|e| NnError::Shape(format!("decimation failed: {e}")))?;
    EdgeMesh::new(mesh)
}

pub fn test_config(input_channels: usize) -> ModelConfig {
    ModelConfig {
        input_channels,
        conv_channels: vec![8, 8, 16, 16],
        pool_targets: vec![120, 96, 75, 60],
        fc_hidden: 16,
        n_classes: 2,
        input_edges: MESH_EDGES,
        pool_before_norm: false,
    }
}

/// Runs all checks on three seeded meshes with their real edge features.
pub fn run_gradcheck(seed: u64) -> Result<GradcheckReport, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let meshes: Vec<EdgeMesh> = (0..3).map(|_| test_mesh(&mut rng)).collect::<Result<_, _>>()?;
    let raw: Vec<Array2<f64>> = meshes
        .iter()
        .map(|m| assemble_features(&m.mesh, false))
        .collect::<Result<_, _>>()
        .map_err(|e| NnError::Shape(e.to_string()))?;
    let stats = fit_normalization(&raw).map_err(|e| NnError::Shape(e.to_string()))?;
    let feats: Vec<Array2<f64>> = raw
        .iter()
        .map(|x| apply_normalization(x, &stats))
        .collect::<Result<_, _>>()
        .map_err(|e| NnError::Shape(e.to_string()))?;
    let channels = feats[0].nrows();

    let mut layers = Vec::new();
    layers.extend(check_conv(&mut rng, &meshes[0], &feats[0])?);
    layers.extend(check_norm(&mut rng)?);
    layers.push(check_pool(&mut rng, &meshes[0])?);

    let mut config = test_config(channels);
    let mut end_to_end = check_network(&mut rng, config.clone(), &meshes, &feats)?;
    config.pool_before_norm = true;
    for mut e in check_network(&mut rng, config, &meshes, &feats)? {
        e.name = format!("pool_before_norm/{}", e.name);
        end_to_end.push(e);
    }
    Ok(GradcheckReport { layers, end_to_end })
}

fn check_conv(
    rng: &mut ChaCha8Rng,
    mesh: &EdgeMesh,
    x: &Array2<f64>,
) -> Result<Vec<GradcheckEntry>, NnError> {
    let (cin, cout) = (x.nrows(), 6);
    let kernel = random(rng, cout, 5 * cin);
    let bias = random(rng, 1, cout).row(0).to_owned();
    let r = random(rng, cout, x.ncols());
    let adj = &mesh.adjacency;

    let g = super::gather_neighborhoods(x.view(), adj)?;
    let grads = edge_conv_backward(x.view(), adj, &g, kernel.view(), r.view());

    let loss_x = |v: &[f64]| {
        let xx = unflat(v, x.dim());
        inner(&edge_conv_forward(xx.view(), adj, kernel.view(), bias.view()).expect("shape"), &r)
    };
    let loss_k = |v: &[f64]| {
        let kk = unflat(v, kernel.dim());
        inner(&edge_conv_forward(x.view(), adj, kk.view(), bias.view()).expect("shape"), &r)
    };
    let loss_b = |v: &[f64]| {
        let bb = ndarray::Array1::from(v.to_vec());
        inner(&edge_conv_forward(x.view(), adj, kernel.view(), bb.view()).expect("shape"), &r)
    };
    Ok(vec![
        entry("conv.input", &flat(&grads.dx), &finite_differences(&flat(x), loss_x), LAYER_TOLERANCE),
        entry(
            "conv.kernel",
            &flat(&grads.dkernel),
            &finite_differences(&flat(&kernel), loss_k),
            LAYER_TOLERANCE,
        ),
        entry(
            "conv.bias",
            &grads.dbias.to_vec(),
            &finite_differences(&bias.to_vec(), loss_b),
            LAYER_TOLERANCE,
        ),
    ])
}

fn check_norm(rng: &mut ChaCha8Rng) -> Result<Vec<GradcheckEntry>, NnError> {
    let c = 4;
    let sizes = [40, 25, 33];
    let xs: Vec<Array2<f64>> = sizes
        .iter()
        .map(|&e| random(rng, c, e).mapv(|v| 2.0 * v + 0.5))
        .collect();
    let rs: Vec<Array2<f64>> = sizes.iter().map(|&e| random(rng, c, e)).collect();
    let gamma: Vec<f64> = (0..c).map(|_| rng.random_range(0.5..1.5)).collect();
    let beta: Vec<f64> = (0..c).map(|_| rng.random_range(-0.5..0.5)).collect();
    let (rm, rv) = (vec![0.0; c], vec![1.0; c]);

    let loss = |xs: &[Array2<f64>], g: &[f64], b: &[f64]| -> f64 {
        let (ys, _) = batch_norm_forward(xs, g, b, &rm, &rv, true);
        ys.iter().zip(&rs).map(|(y, r)| inner(y, r)).sum()
    };
    let (_, cache) = batch_norm_forward(&xs, &gamma, &beta, &rm, &rv, true);
    let (dxs, dgamma, dbeta) = batch_norm_backward(&rs, &gamma, &cache.expect("training"));

    let flat_x: Vec<f64> = xs.iter().flat_map(flat).collect();
    let split = |v: &[f64]| -> Vec<Array2<f64>> {
        let mut at = 0;
        sizes
            .iter()
            .map(|&e| {
                let m = unflat(&v[at..at + c * e], (c, e));
                at += c * e;
                m
            })
            .collect()
    };
    let num_x = finite_differences(&flat_x, |v| loss(&split(v), &gamma, &beta));
    let num_g = finite_differences(&gamma, |v| loss(&xs, v, &beta));
    let num_b = finite_differences(&beta, |v| loss(&xs, &gamma, v));
    let ana_x: Vec<f64> = dxs.iter().flat_map(flat).collect();
    Ok(vec![
        entry("norm.input", &ana_x, &num_x, LAYER_TOLERANCE),
        entry("norm.gamma", &dgamma.to_vec(), &num_g, LAYER_TOLERANCE),
        entry("norm.beta", &dbeta.to_vec(), &num_b, LAYER_TOLERANCE),
    ])
}

fn check_pool(rng: &mut ChaCha8Rng, mesh: &EdgeMesh) -> Result<GradcheckEntry, NnError> {
    let x = random(rng, 5, mesh.edge_count());
    let (y, _, trace) = mesh_pool(x.view(), mesh, 120)?;
    let r = random(rng, 5, y.ncols());
    let dx = trace.backward(r.view());
    let num = finite_differences(&flat(&x), |v| {
        let xx = unflat(v, x.dim());
        let (yy, _, _) = mesh_pool(xx.view(), mesh, 120).expect("pool");
        inner(&yy, &r)
    });
    Ok(entry("pool.input", &flat(&dx), &num, LAYER_TOLERANCE))
}

fn check_network(
    rng: &mut ChaCha8Rng,
    config: ModelConfig,
    meshes: &[EdgeMesh],
    feats: &[Array2<f64>],
) -> Result<Vec<GradcheckEntry>, NnError> {
    let mut net = Network::new(config, rng)?;
    // move biases, gammas and betas off their initial values so every path
    // carries gradient
    for v in net.params.iter_mut() {
        *v += 0.05 * rng.random_range(-1.0..1.0);
    }
    let batch: Vec<(&EdgeMesh, &Array2<f64>)> = meshes.iter().zip(feats).collect();
    let labels = [1usize, 0, 1];
    let weights = [0.3, 0.7];

    let (logits, tape) = net.forward(&batch, Mode::Train)?;
    let (_, dlogits) = weighted_cross_entropy(logits.view(), &labels, &weights);
    let analytic = net.backward(&tape, dlogits.view())?;

    // Pooling order and ReLU signs make the loss piecewise smooth; a
    // coordinate whose +-STEP passes take another branch than the base
    // straddles a kink and is left out.
    let branches = tape.branches();
    let base = net.clone();
    let numeric: Vec<Option<f64>> = (0..net.params.len())
        .into_par_iter()
        .map(|i| {
            let mut n = base.clone();
            let mut at = |v: f64| {
                n.params[i] = v;
                let (logits, tape) = n.forward(&batch, Mode::Train).expect("forward");
                let loss = weighted_cross_entropy(logits.view(), &labels, &weights).0;
                (loss, tape.branches() == branches)
            };
            let (up, same_up) = at(base.params[i] + STEP);
            let (down, same_down) = at(base.params[i] - STEP);
            (same_up && same_down).then(|| (up - down) / (2.0 * STEP))
        })
        .collect();

    Ok(net
        .layout
        .entries
        .iter()
        .map(|e| {
            let (a, n): (Vec<f64>, Vec<f64>) = e
                .range()
                .filter_map(|i| numeric[i].map(|n| (analytic[i], n)))
                .unzip();
            GradcheckEntry {
                skipped: e.range().len() - a.len(),
                ..entry(&e.name, &a, &n, END_TO_END_TOLERANCE)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_definition() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((relative_error(&[1.0], &[1.1]) - 0.1 / 1.1).abs() < 1e-15);
        // both below the floor
        assert!(relative_error(&[1e-12], &[-1e-12]) < 1e-4);
    }

    #[test]
    fn test_mesh_has_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(test_mesh(&mut rng).unwrap().edge_count(), MESH_EDGES);
    }

    #[test]
    fn finite_differences_of_a_quadratic() {
        let g = finite_differences(&[1.0, -2.0], |v| v[0] * v[0] + 3.0 * v[1]);
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
    }
}
