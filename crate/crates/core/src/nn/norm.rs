use ndarray::{Array1, Array2, Axis};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Saved state of a training-mode batch norm forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub x_hat: Vec<Array2<f64>>,
    pub inv_std: Array1<f64>,
    pub mean: Array1<f64>,
    /// Unbiased batch variance, used for the running estimate.
    pub var_unbiased: Array1<f64>,
    pub count: usize,
}

/// Normalizes every channel over all edges of all batch members.
///
/// Training mode uses batch statistics and returns a cache for backward and
/// the running-stat update; inference mode uses `running_mean/var`.
pub fn batch_norm_forward(
    xs: &[Array2<f64>],
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
    training: bool,
) -> (Vec<Array2<f64>>, Option<BatchNormCache>) {
    if !training {
        let inv: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let ys = xs
            .iter()
            .map(|x| {
                let mut y = x.clone();
                for (c, mut row) in y.axis_iter_mut(Axis(0)).enumerate() {
                    let (m, s, g, b) = (running_mean[c], inv[c], gamma[c], beta[c]);
                    row.mapv_inplace(|v| g * (v - m) * s + b);
                }
                y
            })
            .collect();
        return (ys, None);
    }

    let channels = gamma.len();
    let count: usize = xs.iter().map(|x| x.ncols()).sum();
    let n = count as f64;
    let mut mean = Array1::zeros(channels);
    for x in xs {
        mean += &x.sum_axis(Axis(1));
    }
    mean /= n;
    let mut sq = Array1::<f64>::zeros(channels);
    for x in xs {
        for (c, row) in x.axis_iter(Axis(0)).enumerate() {
            sq[c] += row.iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
        }
    }
    let var = &sq / n;
    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
    let var_unbiased = if count > 1 { &sq / (n - 1.0) } else { var.clone() };

    let mut ys = Vec::with_capacity(xs.len());
    let mut x_hat = Vec::with_capacity(xs.len());
    for x in xs {
        let mut h = x.clone();
        for (c, mut row) in h.axis_iter_mut(Axis(0)).enumerate() {
            let (m, s) = (mean[c], inv_std[c]);
            row.mapv_inplace(|v| (v - m) * s);
        }
        let mut y = h.clone();
        for (c, mut row) in y.axis_iter_mut(Axis(0)).enumerate() {
            let (g, b) = (gamma[c], beta[c]);
            row.mapv_inplace(|v| g * v + b);
        }
        ys.push(y);
        x_hat.push(h);
    }
    (
        ys,
        Some(BatchNormCache {
            x_hat,
            inv_std,
            mean,
            var_unbiased,
            count,
        }),
    )
}

/// Per-channel sums `(sum dy, sum dy * x_hat)` for one batch member.
pub(crate) fn partial_sums(dy: &Array2<f64>, x_hat: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let sum_dy = dy.sum_axis(Axis(1));
    let sum_dy_xhat = (dy * x_hat).sum_axis(Axis(1));
    (sum_dy, sum_dy_xhat)
}

/// Input gradient for one batch member given the batch-wide sums.
pub(crate) fn input_grad(
    dy: &Array2<f64>,
    x_hat: &Array2<f64>,
    gamma: &[f64],
    cache: &BatchNormCache,
    sum_dy: &Array1<f64>,
    sum_dy_xhat: &Array1<f64>,
) -> Array2<f64> {
    let n = cache.count as f64;
    let mut dx = Array2::zeros(dy.dim());
    for c in 0..dy.nrows() {
        let k = gamma[c] * cache.inv_std[c] / n;
        let (sd, sdx) = (sum_dy[c], sum_dy_xhat[c]);
        for e in 0..dy.ncols() {
            dx[[c, e]] = k * (n * dy[[c, e]] - sd - x_hat[[c, e]] * sdx);
        }
    }
    dx
}

/// Gradients of a training-mode batch norm: `(dx per member, dgamma, dbeta)`.
pub fn batch_norm_backward(
    dys: &[Array2<f64>],
    gamma: &[f64],
    cache: &BatchNormCache,
) -> (Vec<Array2<f64>>, Array1<f64>, Array1<f64>) {
    let channels = gamma.len();
    let mut sum_dy = Array1::zeros(channels);
    let mut sum_dy_xhat = Array1::zeros(channels);
    for (dy, h) in dys.iter().zip(&cache.x_hat) {
        let (a, b) = partial_sums(dy, h);
        sum_dy += &a;
        sum_dy_xhat += &b;
    }
    let dxs = dys
        .iter()
        .zip(&cache.x_hat)
        .map(|(dy, h)| input_grad(dy, h, gamma, cache, &sum_dy, &sum_dy_xhat))
        .collect();
    (dxs, sum_dy_xhat, sum_dy)
}

/// Exponential moving average of the batch statistics.
pub(crate) fn update_running(running_mean: &mut [f64], running_var: &mut [f64], cache: &BatchNormCache) {
    for c in 0..running_mean.len() {
        running_mean[c] = (1.0 - BN_MOMENTUM) * running_mean[c] + BN_MOMENTUM * cache.mean[c];
        running_var[c] = (1.0 - BN_MOMENTUM) * running_var[c] + BN_MOMENTUM * cache.var_unbiased[c];
    }
}
