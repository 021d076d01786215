use serde::{Deserialize, Serialize};

/// Adam with bias correction over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    #[serde(skip)]
    pub m: Vec<f64>,
    #[serde(skip)]
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut a = Adam::new(3, 0.01);
        let mut p = vec![1.0, -2.0, 3.0];
        a.update(&mut p, &[0.0; 3]);
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = g and v_hat = g^2 after one step, so the update is
        // lr * g / (|g| + eps)
        for g in [0.5, -3.0, 1e-3] {
            let mut a = Adam::new(1, 2e-4);
            let mut p = vec![0.0];
            a.update(&mut p, &[g]);
            let want = -2e-4 * g / (g.abs() + 1e-8);
            assert!((p[0] - want).abs() < 1e-18, "{} vs {want}", p[0]);
            assert!((p[0].abs() - 2e-4).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_gradient_keeps_unit_steps() {
        let mut a = Adam::new(1, 0.1);
        let mut p = vec![0.0];
        for k in 1..=5 {
            a.update(&mut p, &[2.0]);
            assert!((p[0] + 0.1 * k as f64).abs() < 1e-6);
        }
    }
}
