use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Label, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassWeights {
    pub stable: f64,
    pub growing: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        Self {
            stable: 0.3,
            growing: 0.7,
        }
    }
}

impl ClassWeights {
    pub fn of(&self, label: Label) -> f64 {
        match label {
            Label::Stable => self.stable,
            Label::Growing => self.growing,
        }
    }

    /// `[stable, growing]`, indexed like the logits.
    pub fn as_array(&self) -> [f64; 2] {
        [self.stable, self.growing]
    }
}

/// Draws sample indices with replacement, `P(i)` proportional to the
/// weight of sample `i`'s class.
#[derive(Debug, Clone)]
pub struct WeightedSampler {
    dist: WeightedIndex<f64>,
}

impl WeightedSampler {
    pub fn new(labels: &[Label], weights: ClassWeights) -> Result<Self, TrainError> {
        if labels.is_empty() {
            return Err(TrainError::Data("cannot sample from an empty label list".into()));
        }
        if !(weights.stable > 0.0 && weights.growing > 0.0)
            || !weights.stable.is_finite()
            || !weights.growing.is_finite()
        {
            return Err(TrainError::Config("class weights must be positive".into()));
        }
        let dist = WeightedIndex::new(labels.iter().map(|&l| weights.of(l)))
            .map_err(|e| TrainError::Config(e.to_string()))?;
        Ok(Self { dist })
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        self.dist.sample(rng)
    }
}

/// Endless seeded stream of weighted draws.
pub fn weighted_sampler(
    labels: &[Label],
    weights: ClassWeights,
    seed: u64,
) -> Result<impl Iterator<Item = usize>, TrainError> {
    let s = WeightedSampler::new(labels, weights)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(std::iter::repeat_with(move || s.draw(&mut rng)))
}
