use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::NnError;
use crate::mesh::EdgeAdjacency;

/// Per channel and edge, the five order-independent neighborhood terms
/// `(f_e, |f_a - f_c|, f_a + f_c, |f_b - f_d|, f_b + f_d)`. Row `i * 5 + s`
/// holds slot `s` of channel `i`.
pub fn gather_neighborhoods(x: ArrayView2<f64>, adj: &EdgeAdjacency) -> Result<Array2<f64>, NnError> {
    let (c, e) = x.dim();
    if adj.edge_count() != e {
        return Err(NnError::Shape(format!(
            "features have {e} edges, adjacency has {}",
            adj.edge_count()
        )));
    }
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let nb = adj.neighbors();
    let mut g = Array2::zeros((5 * c, e));
    let gs = g.as_slice_mut().expect("fresh array");
    for i in 0..c {
        let row = &xs[i * e..(i + 1) * e];
        let base = i * 5 * e;
        for (k, &[a, b, cc, d]) in nb.iter().enumerate() {
            let (fa, fb, fc, fd) = (row[a], row[b], row[cc], row[d]);
            gs[base + k] = row[k];
            gs[base + e + k] = (fa - fc).abs();
            gs[base + 2 * e + k] = fa + fc;
            gs[base + 3 * e + k] = (fb - fd).abs();
            gs[base + 4 * e + k] = fb + fd;
        }
    }
    Ok(g)
}

fn check_kernel(c_in: usize, kernel: ArrayView2<f64>, bias: ArrayView1<f64>) -> Result<(), NnError> {
    if kernel.ncols() != 5 * c_in || kernel.nrows() != bias.len() {
        return Err(NnError::Shape(format!(
            "kernel {:?} and bias {} do not fit {c_in} input channels",
            kernel.dim(),
            bias.len()
        )));
    }
    Ok(())
}

/// `kernel (C_out x 5 C_in)` applied to the gathered neighborhoods, plus bias.
pub fn edge_conv_forward(
    x: ArrayView2<f64>,
    adj: &EdgeAdjacency,
    kernel: ArrayView2<f64>,
    bias: ArrayView1<f64>,
) -> Result<Array2<f64>, NnError> {
    check_kernel(x.nrows(), kernel, bias)?;
    let g = gather_neighborhoods(x, adj)?;
    Ok(conv_from_gathered(&g, kernel, bias))
}

pub(crate) fn conv_from_gathered(
    g: &Array2<f64>,
    kernel: ArrayView2<f64>,
    bias: ArrayView1<f64>,
) -> Array2<f64> {
    let mut y = kernel.dot(g);
    for (mut row, &b) in y.axis_iter_mut(Axis(0)).zip(bias.iter()) {
        row += b;
    }
    y
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub dx: Array2<f64>,
    pub dkernel: Array2<f64>,
    pub dbias: Array1<f64>,
}

#[inline]
fn sign(v: f64) -> f64 {
    // subgradient of |v| is 0 at v = 0
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gradients of an edge convolution given the upstream gradient `dy` and the
/// gathered matrix from the forward pass.
pub fn edge_conv_backward(
    x: ArrayView2<f64>,
    adj: &EdgeAdjacency,
    gathered: &Array2<f64>,
    kernel: ArrayView2<f64>,
    dy: ArrayView2<f64>,
) -> ConvGrads {
    let dkernel = dy.dot(&gathered.t());
    let dbias = dy.sum_axis(Axis(1));
    let dg = kernel.t().dot(&dy);
    let dx = scatter_neighborhoods(x, adj, &dg);
    ConvGrads { dx, dkernel, dbias }
}

/// Adjoint of [`gather_neighborhoods`].
pub(crate) fn scatter_neighborhoods(
    x: ArrayView2<f64>,
    adj: &EdgeAdjacency,
    dg: &Array2<f64>,
) -> Array2<f64> {
    let (c, e) = x.dim();
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let dg = dg.as_standard_layout();
    let dgs = dg.as_slice().expect("standard layout");
    let mut dx = Array2::zeros((c, e));
    let dxs = dx.as_slice_mut().expect("fresh array");
    let nb = adj.neighbors();
    for i in 0..c {
        let row = &xs[i * e..(i + 1) * e];
        let base = i * 5 * e;
        let out = &mut dxs[i * e..(i + 1) * e];
        for (k, &[a, b, cc, d]) in nb.iter().enumerate() {
            out[k] += dgs[base + k];
            let s_ac = sign(row[a] - row[cc]) * dgs[base + e + k];
            let sum_ac = dgs[base + 2 * e + k];
            out[a] += s_ac + sum_ac;
            out[cc] += -s_ac + sum_ac;
            let s_bd = sign(row[b] - row[d]) * dgs[base + 3 * e + k];
            let sum_bd = dgs[base + 4 * e + k];
            out[b] += s_bd + sum_bd;
            out[d] += -s_bd + sum_bd;
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_edge_adjacency, shapes};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_kernel() {
        let m = shapes::icosahedron();
        let adj = build_edge_adjacency(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 3, m.edge_count());
        let mut k = Array2::zeros((3, 15));
        for i in 0..3 {
            k[[i, i * 5]] = 1.0;
        }
        let y = edge_conv_forward(x.view(), &adj, k.view(), Array1::zeros(3).view()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn side_swap_symmetry() {
        let m = shapes::icosphere(1, 1.0);
        let adj = build_edge_adjacency(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&mut rng, 4, m.edge_count());
        let k = random(&mut rng, 6, 20);
        let b = Array1::from_shape_fn(6, |_| rng.random_range(-1.0..1.0));
        let y1 = edge_conv_forward(x.view(), &adj, k.view(), b.view()).unwrap();
        let y2 = edge_conv_forward(x.view(), &adj.swapped_sides(), k.view(), b.view()).unwrap();
        for (p, q) in y1.iter().zip(y2.iter()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_loop() {
        let m = shapes::icosahedron();
        let adj = build_edge_adjacency(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (cin, cout, e) = (3, 4, m.edge_count());
        let x = random(&mut rng, cin, e);
        let k = random(&mut rng, cout, cin * 5);
        let b = Array1::from_shape_fn(cout, |_| rng.random_range(-1.0..1.0));
        let y = edge_conv_forward(x.view(), &adj, k.view(), b.view()).unwrap();
        for edge in 0..e {
            let [a, bb, c, d] = adj.neighbors()[edge];
            for o in 0..cout {
                let mut acc = b[o];
                for i in 0..cin {
                    let f = |j: usize| x[[i, j]];
                    let terms = [
                        f(edge),
                        (f(a) - f(c)).abs(),
                        f(a) + f(c),
                        (f(bb) - f(d)).abs(),
                        f(bb) + f(d),
                    ];
                    for (s, t) in terms.iter().enumerate() {
                        acc += k[[o, i * 5 + s]] * t;
                    }
                }
                assert!((y[[o, edge]] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_shape_mismatch() {
        let m = shapes::icosahedron();
        let adj = build_edge_adjacency(&m).unwrap();
        let x = Array2::zeros((2, 29));
        let k = Array2::zeros((1, 10));
        assert!(edge_conv_forward(x.view(), &adj, k.view(), Array1::zeros(1).view()).is_err());
        let x = Array2::zeros((2, 30));
        let k = Array2::zeros((1, 9));
        assert!(edge_conv_forward(x.view(), &adj, k.view(), Array1::zeros(1).view()).is_err());
    }
}
