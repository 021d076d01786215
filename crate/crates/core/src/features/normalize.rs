use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{EdgeFeatureMatrix, FeatureError};

/// Per-channel z-score statistics pooled over every edge of a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormStats {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

/// Pooled mean and population standard deviation per channel. Channels
/// whose spread is below 1e-12 get a std of 1.
pub fn fit_normalization<'a, I>(train: I) -> Result<FeatureNormStats, FeatureError>
where
    I: IntoIterator<Item = &'a EdgeFeatureMatrix>,
{
    let mats: Vec<&EdgeFeatureMatrix> = train.into_iter().collect();
    let first = mats.first().ok_or(FeatureError::EmptyTrainingSet)?;
    let channels = first.nrows();
    let mut sum = vec![0.0; channels];
    let mut count = 0usize;
    for m in &mats {
        if m.nrows() != channels {
            return Err(FeatureError::ChannelMismatch {
                expected: channels,
                got: m.nrows(),
            });
        }
        for (c, row) in m.rows().into_iter().enumerate() {
            sum[c] += row.sum();
        }
        count += m.ncols();
    }
    if count == 0 {
        return Err(FeatureError::EmptyTrainingSet);
    }
    let n = count as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    // second pass for numerical stability
    let mut sq = vec![0.0; channels];
    for m in &mats {
        for (c, row) in m.rows().into_iter().enumerate() {
            sq[c] += row.iter().map(|x| (x - mean[c]).powi(2)).sum::<f64>();
        }
    }
    let std = sq
        .iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    Ok(FeatureNormStats { mean, std })
}

pub fn apply_normalization(
    features: &EdgeFeatureMatrix,
    stats: &FeatureNormStats,
) -> Result<EdgeFeatureMatrix, FeatureError> {
    if features.nrows() != stats.channels() {
        return Err(FeatureError::ChannelMismatch {
            expected: stats.channels(),
            got: features.nrows(),
        });
    }
    let mut out: Array2<f64> = features.clone();
    for (c, mut row) in out.rows_mut().into_iter().enumerate() {
        let (m, s) = (stats.mean[c], stats.std[c]);
        row.mapv_inplace(|x| (x - m) / s);
    }
    Ok(out)
}
