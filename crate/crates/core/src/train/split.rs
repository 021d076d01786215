use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Label, TrainError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Plain seeded shuffle.
    #[default]
    Random,
    /// Each class dealt round-robin over the folds.
    Stratified,
    /// Samples sharing a group id stay in one fold.
    Grouped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Persisted partition, reused across model configurations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFile {
    pub seed: u64,
    pub k: usize,
    pub mode: SplitMode,
    pub n_samples: usize,
    pub folds: Vec<Fold>,
}

impl SplitFile {
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let s: SplitFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let mut seen = vec![false; s.n_samples];
        for f in &s.folds {
            for &i in &f.validation {
                if i >= s.n_samples || std::mem::replace(&mut seen[i], true) {
                    return Err(TrainError::Data(format!("{}: folds do not partition the samples", path.display())));
                }
            }
        }
        if s.folds.len() != s.k || seen.iter().any(|&v| !v) {
            return Err(TrainError::Data(format!("{}: folds do not cover the samples", path.display())));
        }
        Ok(s)
    }
}

/// Partitions `0..labels.len()` into `k` validation folds. In the random
/// mode the first `n % k` folds hold one extra sample.
pub fn kfold_split(
    labels: &[Label],
    groups: &[Option<String>],
    k: usize,
    seed: u64,
    mode: SplitMode,
) -> Result<SplitFile, TrainError> {
    let n = labels.len();
    if k < 2 {
        return Err(TrainError::Config("k_folds must be at least 2".into()));
    }
    if n < k {
        return Err(TrainError::Data(format!("{n} samples cannot fill {k} folds")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assign = vec![0usize; n];
    match mode {
        SplitMode::Random => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let (base, extra) = (n / k, n % k);
            let mut at = 0;
            for f in 0..k {
                let size = base + usize::from(f < extra);
                for &i in &order[at..at + size] {
                    assign[i] = f;
                }
                at += size;
            }
        }
        SplitMode::Stratified => {
            let mut order = Vec::with_capacity(n);
            for class in [Label::Growing, Label::Stable] {
                let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
                idx.shuffle(&mut rng);
                order.extend(idx);
            }
            for (pos, &i) in order.iter().enumerate() {
                assign[i] = pos % k;
            }
        }
        SplitMode::Grouped => {
            let mut by_group: BTreeMap<String, Vec<usize>> = BTreeMap::new();
            for i in 0..n {
                let key = match groups.get(i).and_then(|g| g.clone()) {
                    Some(g) => format!("g:{g}"),
                    None => format!("s:{i}"),
                };
                by_group.entry(key).or_default().push(i);
            }
            let mut members: Vec<Vec<usize>> = by_group.into_values().collect();
            if members.len() < k {
                return Err(TrainError::Data(format!(
                    "{} groups cannot fill {k} folds",
                    members.len()
                )));
            }
            members.shuffle(&mut rng);
            members.sort_by_key(|m| std::cmp::Reverse(m.len()));
            let mut sizes = vec![0usize; k];
            for m in members {
                let f = (0..k).min_by_key(|&f| (sizes[f], f)).expect("k >= 2");
                sizes[f] += m.len();
                for i in m {
                    assign[i] = f;
                }
            }
        }
    }
    let folds = (0..k)
        .map(|f| Fold {
            index: f,
            train: (0..n).filter(|&i| assign[i] != f).collect(),
            validation: (0..n).filter(|&i| assign[i] == f).collect(),
        })
        .collect();
    Ok(SplitFile {
        seed,
        k,
        mode,
        n_samples: n,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize, growing: usize) -> Vec<Label> {
        (0..n)
            .map(|i| if i < growing { Label::Growing } else { Label::Stable })
            .collect()
    }

    #[test]
    fn fold_sizes_169() {
        let s = kfold_split(&labels(169, 49), &[], 5, 1, SplitMode::Random).unwrap();
        let sizes: Vec<usize> = s.folds.iter().map(|f| f.validation.len()).collect();
        assert_eq!(sizes, vec![34, 34, 34, 34, 33]);
        let mut all: Vec<usize> = s.folds.iter().flat_map(|f| f.validation.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..169).collect::<Vec<_>>());
        for f in &s.folds {
            assert_eq!(f.train.len() + f.validation.len(), 169);
            assert!(f.train.iter().all(|i| !f.validation.contains(i)));
        }
    }

    #[test]
    fn seeded_and_leave_one_out() {
        let l = labels(12, 4);
        assert_eq!(
            kfold_split(&l, &[], 3, 9, SplitMode::Random).unwrap(),
            kfold_split(&l, &[], 3, 9, SplitMode::Random).unwrap()
        );
        let loo = kfold_split(&l, &[], 12, 9, SplitMode::Random).unwrap();
        assert!(loo.folds.iter().all(|f| f.validation.len() == 1 && f.train.len() == 11));
        assert!(kfold_split(&l, &[], 13, 9, SplitMode::Random).is_err());
        assert!(kfold_split(&l, &[], 1, 9, SplitMode::Random).is_err());
    }

    #[test]
    fn stratified_balances_classes() {
        let s = kfold_split(&labels(200, 60), &[], 5, 3, SplitMode::Stratified).unwrap();
        for f in &s.folds {
            assert_eq!(f.validation.len(), 40);
            assert_eq!(f.validation.iter().filter(|&&i| i < 60).count(), 12);
        }
    }

    #[test]
    fn grouped_keeps_groups_together() {
        let groups: Vec<Option<String>> = (0..30)
            .map(|i| if i % 3 == 0 { None } else { Some(format!("p{}", i / 3)) })
            .collect();
        let s = kfold_split(&labels(30, 9), &groups, 4, 5, SplitMode::Grouped).unwrap();
        for f in &s.folds {
            for &i in &f.validation {
                if let Some(g) = &groups[i] {
                    for j in 0..30 {
                        if groups[j].as_ref() == Some(g) {
                            assert!(f.validation.contains(&j));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn split_file_round_trip() {
        let s = kfold_split(&labels(20, 6), &[], 4, 2, SplitMode::Random).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("split.json");
        s.save(&p).unwrap();
        assert_eq!(SplitFile::load(&p).unwrap(), s);
    }
}
