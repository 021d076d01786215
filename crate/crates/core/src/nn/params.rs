use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ModelConfig;

/// One named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat layout shared by parameters, gradients and optimizer moments.
///
/// Conv kernels are `out x (in * 5)` row-major, column `i * 5 + s` holding
/// slot `s` of input channel `i`. FC weights are `out x in` row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub entries: Vec<ParamEntry>,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(config: &ModelConfig) -> Self {
        let mut entries = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let e = ParamEntry { name, shape, offset };
            offset += e.len();
            entries.push(e);
        };
        for l in 0..config.layers() {
            let (cin, cout) = (config.conv_in(l), config.conv_channels[l]);
            push(format!("conv{l}.kernel"), vec![cout, cin * 5]);
            push(format!("conv{l}.bias"), vec![cout]);
            push(format!("bn{l}.gamma"), vec![cout]);
            push(format!("bn{l}.beta"), vec![cout]);
        }
        let last = *config.conv_channels.last().expect("validated config");
        push("fc1.weight".into(), vec![config.fc_hidden, last]);
        push("fc1.bias".into(), vec![config.fc_hidden]);
        push("fc2.weight".into(), vec![config.n_classes, config.fc_hidden]);
        push("fc2.bias".into(), vec![config.n_classes]);
        Self {
            entries,
            total: offset,
        }
    }

    pub fn get(&self, name: &str) -> &ParamEntry {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .unwrap_or_else(|| panic!("no parameter named {name}"))
    }

    pub fn range(&self, name: &str) -> Range<usize> {
        self.get(name).range()
    }

    /// He-normal weights, zero biases, unit gamma, zero beta.
    pub fn init<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = vec![0.0; self.total];
        for e in &self.entries {
            let r = e.range();
            if e.name.ends_with(".kernel") || e.name.ends_with(".weight") {
                let fan_in = e.shape[1] as f64;
                let gain = if e.name == "fc2.weight" { 1.0 } else { 2.0 };
                let normal = Normal::new(0.0, (gain / fan_in).sqrt()).expect("positive std");
                for x in &mut p[r] {
                    *x = normal.sample(rng);
                }
            } else if e.name.ends_with(".gamma") {
                p[r].fill(1.0);
            }
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn layout_is_contiguous() {
        let c = ModelConfig::uia(7);
        let l = ParamLayout::new(&c);
        let mut next = 0;
        for e in &l.entries {
            assert_eq!(e.offset, next);
            next += e.len();
        }
        assert_eq!(next, l.total);
        assert_eq!(l.get("conv0.kernel").shape, vec![32, 35]);
        assert_eq!(l.get("conv3.kernel").shape, vec![256, 640]);
        assert_eq!(l.get("fc1.weight").shape, vec![100, 256]);
    }

    #[test]
    fn init_is_seeded() {
        let l = ParamLayout::new(&ModelConfig::uia(10));
        let a = l.init(&mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
        let b = l.init(&mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert!(a[l.range("bn2.gamma")].iter().all(|&g| g == 1.0));
        assert!(a[l.range("conv1.bias")].iter().all(|&g| g == 0.0));
    }
}
