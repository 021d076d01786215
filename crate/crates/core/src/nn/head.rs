use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

/// Mean over the edge axis.
pub fn global_average_pool(x: ArrayView2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(1)).expect("at least one edge")
}

pub fn fully_connected(x: ArrayView1<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    w.dot(&x) + b
}

pub fn relu(x: &Array1<f64>) -> Array1<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Numerically stable softmax of one logit row.
pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let m = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = logits.mapv(|v| (v - m).exp());
    let s = e.sum();
    e / s
}

/// Weighted mean cross-entropy over a batch and its gradient with respect
/// to the logits. `class_weights[k]` weighs samples labeled `k`.
pub fn weighted_cross_entropy(
    logits: ArrayView2<f64>,
    labels: &[usize],
    class_weights: &[f64],
) -> (f64, Array2<f64>) {
    assert_eq!(logits.nrows(), labels.len());
    let total_w: f64 = labels.iter().map(|&y| class_weights[y]).sum();
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logits.dim());
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let w = class_weights[y] / total_w;
        loss += w * (lse - row[y]);
        let p = softmax(row);
        for k in 0..row.len() {
            grad[[i, k]] = w * (p[k] - if k == y { 1.0 } else { 0.0 });
        }
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_ln2() {
        for w in [[0.3, 0.7], [5.0, 0.1]] {
            let (l, _) = weighted_cross_entropy(array![[0.0, 0.0]].view(), &[1], &w);
            assert!((l - 2f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn equal_weights_reduce_to_mean() {
        let logits = array![[0.2, -1.0], [3.0, 0.5], [-0.7, 0.9]];
        let labels = [0, 1, 1];
        let (l, _) = weighted_cross_entropy(logits.view(), &labels, &[2.0, 2.0]);
        let plain: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -softmax(logits.row(i))[y].ln())
            .sum::<f64>()
            / 3.0;
        assert!((l - plain).abs() < 1e-12);
    }

    #[test]
    fn weighted_batch_matches_formula() {
        let logits = array![[1.0, 2.0], [0.5, -0.5], [-1.0, 1.5]];
        let labels = [1, 0, 1];
        let w = [0.3, 0.7];
        let (l, _) = weighted_cross_entropy(logits.view(), &labels, &w);
        // -log softmax evaluated by hand: log(1 + e^{other - own})
        let nll = [
            (1.0 + (1.0f64 - 2.0).exp()).ln(),
            (1.0 + (-0.5f64 - 0.5).exp()).ln(),
            (1.0 + (-1.0f64 - 1.5).exp()).ln(),
        ];
        let want = (0.7 * nll[0] + 0.3 * nll[1] + 0.7 * nll[2]) / (0.7 + 0.3 + 0.7);
        assert!((l - want).abs() < 1e-12);
    }

    #[test]
    fn stable_for_large_logits() {
        let (l, g) = weighted_cross_entropy(array![[1000.0, -1000.0]].view(), &[1], &[1.0, 1.0]);
        assert!((l - 2000.0).abs() < 1e-9);
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits = array![[0.3, -0.2], [1.1, 0.4], [-0.6, 0.8]];
        let labels = [0, 1, 1];
        let w = [0.3, 0.7];
        let (_, g) = weighted_cross_entropy(logits.view(), &labels, &w);
        let h = 1e-6;
        for i in 0..3 {
            for k in 0..2 {
                let mut p = logits.clone();
                p[[i, k]] += h;
                let mut m = logits.clone();
                m[[i, k]] -= h;
                let fd = (weighted_cross_entropy(p.view(), &labels, &w).0
                    - weighted_cross_entropy(m.view(), &labels, &w).0)
                    / (2.0 * h);
                assert!((fd - g[[i, k]]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pooling_and_fc_basics() {
        let x = array![[2.0, 2.0, 2.0], [-1.0, -1.0, -1.0]];
        assert_eq!(global_average_pool(x.view()), array![2.0, -1.0]);
        let v = array![0.5, -3.0];
        let eye = Array2::eye(2);
        assert_eq!(fully_connected(v.view(), eye.view(), Array1::zeros(2).view()), v);
        assert_eq!(relu(&v), array![0.5, 0.0]);
    }
}
