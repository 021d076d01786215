//! Datasets, cross-validation splits, weighted sampling and the training
//! loop with periodic validation and F1-based checkpoint selection.

mod dataset;
mod sampler;
mod split;

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{load_dataset, read_manifest, write_manifest, Label, ManifestRow, Sample};
pub use sampler::{weighted_sampler, ClassWeights, WeightedSampler};
pub use split::{kfold_split, Fold, SplitFile, SplitMode};

use crate::features::{apply_normalization, fit_normalization, FeatureNormStats, FeatureOptions};
use crate::metrics::{self, build_report, confusion_metrics, evaluate_fold, predict_labels, EvalReport};
use crate::nn::{
    save_checkpoint, weighted_cross_entropy, Adam, Checkpoint, EdgeMesh, Mode, ModelConfig, Network,
    NnError, RngState,
};
use crate::synth::{mean_curvedness, sample_seed};
use crate::voxel::MeshMode;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Data(String),
    #[error("fold {fold}: {message}")]
    Fold { fold: usize, message: String },
    #[error(
        "non-finite loss {loss} at epoch {epoch}, step {step} (max |param| {max_param}, grad norm {grad_norm})"
    )]
    NonFinite {
        epoch: usize,
        step: usize,
        loss: f64,
        max_param: f64,
        grad_norm: f64,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub class_weights: ClassWeights,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_validate_every")]
    pub validate_every: usize,
    #[serde(default = "default_k_folds")]
    pub k_folds: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_batch_size() -> usize {
    50
}
fn default_lr() -> f64 {
    2e-4
}
fn default_max_epochs() -> usize {
    200
}
fn default_validate_every() -> usize {
    5
}
fn default_k_folds() -> usize {
    5
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self {
            model,
            class_weights: ClassWeights::default(),
            batch_size: default_batch_size(),
            lr: default_lr(),
            max_epochs: default_max_epochs(),
            validate_every: default_validate_every(),
            k_folds: default_k_folds(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.model.validate()?;
        let fail = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 || self.max_epochs == 0 || self.validate_every == 0 || self.k_folds == 0 {
            return fail("batch_size, max_epochs, validate_every and k_folds must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be positive");
        }
        if !(self.class_weights.stable > 0.0 && self.class_weights.growing > 0.0) {
            return fail("class weights must be positive");
        }
        if self.validate_every > self.max_epochs {
            return fail("validate_every must not exceed max_epochs");
        }
        Ok(())
    }
}

/// One validation evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub history: Vec<ValidationRecord>,
    pub best_epoch: usize,
    pub best_macro_f1: f64,
    /// Best network with its optimizer and RNG state at that epoch.
    pub checkpoint: Checkpoint,
    /// Growing probabilities of the validation samples under the best network.
    pub validation_scores: Vec<f64>,
    pub validation_labels: Vec<Label>,
}

/// Per-channel z-scored copies of `features` using statistics of `fit_on`.
fn normalized(
    fit_on: &[&Sample],
    apply_to: &[&[&Sample]],
) -> Result<(FeatureNormStats, Vec<Vec<Array2<f64>>>), TrainError> {
    let stats = fit_normalization(fit_on.iter().map(|s| &s.features))
        .map_err(|e| TrainError::Data(e.to_string()))?;
    let out = apply_to
        .iter()
        .map(|set| {
            set.iter()
                .map(|s| apply_normalization(&s.features, &stats))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| TrainError::Data(e.to_string()))
        })
        .collect::<Result<_, _>>()?;
    Ok((stats, out))
}

fn predict(net: &Network, meshes: &[&EdgeMesh], feats: &[Array2<f64>]) -> Result<Vec<f64>, TrainError> {
    let batch: Vec<(&EdgeMesh, &Array2<f64>)> = meshes.iter().copied().zip(feats).collect();
    Ok(net.predict_proba(&batch)?)
}

/// Trains one fold. Each epoch runs `ceil(N / batch_size)` batches of
/// `batch_size` weighted draws; every `validate_every` epochs the macro F1
/// on `val` is recorded and the best (strictly greater, so the earliest on
/// ties) state is kept.
pub fn train_fold(
    fold: usize,
    train: &[&Sample],
    val: &[&Sample],
    cfg: &TrainConfig,
    features: FeatureOptions,
) -> Result<FoldResult, TrainError> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::Fold {
            fold,
            message: "empty training or validation set".into(),
        });
    }
    let (norm_stats, mut sets) = normalized(train, &[train, val])?;
    let val_feats = sets.pop().expect("two sets");
    let train_feats = sets.pop().expect("two sets");
    let train_meshes: Vec<&EdgeMesh> = train.iter().map(|s| &s.mesh).collect();
    let val_meshes: Vec<&EdgeMesh> = val.iter().map(|s| &s.mesh).collect();
    let train_labels: Vec<Label> = train.iter().map(|s| s.label).collect();
    let val_labels: Vec<Label> = val.iter().map(|s| s.label).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(cfg.seed, fold));
    let mut net = Network::new(cfg.model.clone(), &mut rng)?;
    let mut adam = Adam::new(net.params.len(), cfg.lr);
    let sampler = WeightedSampler::new(&train_labels, cfg.class_weights)?;
    let weights = cfg.class_weights.as_array();
    let batches = train.len().div_ceil(cfg.batch_size);

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Checkpoint, Vec<f64>)> = None;
    let mut step = 0usize;
    for epoch in 1..=cfg.max_epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..batches {
            let idx: Vec<usize> = (0..cfg.batch_size).map(|_| sampler.draw(&mut rng)).collect();
            let batch: Vec<(&EdgeMesh, &Array2<f64>)> =
                idx.iter().map(|&i| (train_meshes[i], &train_feats[i])).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| train_labels[i].index()).collect();
            let (logits, tape) = net.forward(&batch, Mode::Train)?;
            let (loss, dlogits) = weighted_cross_entropy(logits.view(), &labels, &weights);
            let grads = net.backward(&tape, dlogits.view())?;
            step += 1;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFinite {
                    epoch,
                    step,
                    loss,
                    max_param: net.params.iter().fold(0.0, |a, p| a.max(p.abs())),
                    grad_norm: grads.iter().map(|g| g * g).sum::<f64>().sqrt(),
                });
            }
            adam.update(&mut net.params, &grads);
            net.update_running_stats(&tape);
            epoch_loss += loss;
        }
        epoch_loss /= batches as f64;

        if epoch % cfg.validate_every == 0 {
            let scores = predict(&net, &val_meshes, &val_feats)?;
            let m = confusion_metrics(&predict_labels(&scores), &val_labels)?;
            log::info!(
                "fold {fold} epoch {epoch}: train loss {epoch_loss:.4}, val macro F1 {:.4}, accuracy {:.4}",
                m.macro_f1,
                m.accuracy
            );
            history.push(ValidationRecord {
                epoch,
                train_loss: epoch_loss,
                macro_f1: m.macro_f1,
                accuracy: m.accuracy,
            });
            if best.as_ref().is_none_or(|b| m.macro_f1 > b.0) {
                let ck = Checkpoint {
                    network: net.clone(),
                    feature_options: features,
                    norm_stats: norm_stats.clone(),
                    optimizer: adam.clone(),
                    rng: RngState::capture(&rng),
                    epoch,
                };
                best = Some((m.macro_f1, epoch, ck, scores));
            }
        }
    }
    let (best_macro_f1, best_epoch, checkpoint, validation_scores) =
        best.ok_or_else(|| TrainError::Config("no validation epoch was scheduled".into()))?;
    Ok(FoldResult {
        fold,
        history,
        best_epoch,
        best_macro_f1,
        checkpoint,
        validation_scores,
        validation_labels: val_labels,
    })
}

/// Default report name: `uia_model_1` / `roi_model_1` without coordinate
/// channels, `_2` with them.
pub fn model_name(mode: MeshMode, features: FeatureOptions) -> String {
    let m = match mode {
        MeshMode::Uia => "uia",
        MeshMode::Roi => "roi",
    };
    format!("{m}_model_{}", if features.with_coords { 2 } else { 1 })
}

/// JSON experiment description consumed by `meshgrow train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Resolved relative to the config file.
    pub manifest: PathBuf,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_mode")]
    pub mode: MeshMode,
    #[serde(default)]
    pub features: FeatureOptions,
    /// Overrides the default architecture for `mode`; `input_channels` must
    /// match the feature options.
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub class_weights: ClassWeights,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_validate_every")]
    pub validate_every: usize,
    #[serde(default = "default_k_folds")]
    pub k_folds: usize,
    #[serde(default)]
    pub split_mode: SplitMode,
    /// Existing split to reuse; created in the output directory otherwise.
    #[serde(default)]
    pub split_file: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_mode() -> MeshMode {
    MeshMode::Uia
}

impl ExperimentConfig {
    pub fn new(manifest: PathBuf) -> Self {
        serde_json::from_value(serde_json::json!({ "manifest": manifest })).expect("defaults")
    }

    pub fn model_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| model_name(self.mode, self.features))
    }

    pub fn train_config(&self, fallback_seed: u64) -> Result<TrainConfig, TrainError> {
        let channels = self.features.channel_count();
        let model = match &self.model {
            Some(m) => {
                if m.input_channels != channels {
                    return Err(TrainError::Config(format!(
                        "model expects {} input channels but the features have {channels}",
                        m.input_channels
                    )));
                }
                m.clone()
            }
            None => match self.mode {
                MeshMode::Uia => ModelConfig::uia(channels),
                MeshMode::Roi => ModelConfig::roi(channels),
            },
        };
        let cfg = TrainConfig {
            model,
            class_weights: self.class_weights,
            batch_size: self.batch_size,
            lr: self.lr,
            max_epochs: self.max_epochs,
            validate_every: self.validate_every,
            k_folds: self.k_folds,
            seed: self.seed.unwrap_or(fallback_seed),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let mut cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.manifest = base.join(&cfg.manifest);
        if let Some(s) = &cfg.split_file {
            cfg.split_file = Some(base.join(s));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub folds: Vec<FoldResult>,
    pub report: EvalReport,
}

fn check_fold_classes(split: &SplitFile, samples: &[Sample]) -> Result<(), TrainError> {
    for f in &split.folds {
        for (set, name) in [(&f.train, "training"), (&f.validation, "validation")] {
            for class in [Label::Growing, Label::Stable] {
                if !set.iter().any(|&i| samples[i].label == class) {
                    return Err(TrainError::Fold {
                        fold: f.index,
                        message: format!("{name} set has no {class} samples"),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Trains every fold of `split` (in parallel when the thread pool allows)
/// and aggregates the best-checkpoint validation predictions.
pub fn run_experiment(
    name: &str,
    cfg: &TrainConfig,
    features: FeatureOptions,
    samples: &[Sample],
    split: &SplitFile,
) -> Result<ExperimentResult, TrainError> {
    cfg.validate()?;
    if split.n_samples != samples.len() {
        return Err(TrainError::Data(format!(
            "split covers {} samples, dataset has {}",
            split.n_samples,
            samples.len()
        )));
    }
    check_fold_classes(split, samples)?;
    let folds: Vec<FoldResult> = split
        .folds
        .par_iter()
        .map(|f| {
            let train: Vec<&Sample> = f.train.iter().map(|&i| &samples[i]).collect();
            let val: Vec<&Sample> = f.validation.iter().map(|&i| &samples[i]).collect();
            train_fold(f.index, &train, &val, cfg, features)
        })
        .collect::<Result<_, _>>()?;
    let metrics = folds
        .iter()
        .map(|f| evaluate_fold(f.fold, &f.validation_scores, &f.validation_labels))
        .collect::<Result<Vec<_>, _>>()?;
    let report = build_report(name, metrics)?;
    Ok(ExperimentResult { folds, report })
}

/// Writes per-fold checkpoints and histories plus the report files.
pub fn save_experiment(result: &ExperimentResult, out: &Path) -> Result<(), TrainError> {
    std::fs::create_dir_all(out)?;
    for f in &result.folds {
        let dir = out.join(format!("fold_{}", f.fold));
        std::fs::create_dir_all(&dir)?;
        save_checkpoint(&dir.join("best.ckpt"), &f.checkpoint)?;
        let mut h = serde_json::to_string_pretty(&f.history)?;
        h.push('\n');
        std::fs::write(dir.join("history.json"), h)?;
    }
    metrics::emit_report(std::slice::from_ref(&result.report), out)?;
    Ok(())
}

/// Rebuilds the report of a finished run from its fold checkpoints: each
/// checkpoint scores its fold's validation samples.
pub fn evaluate_checkpoints(
    name: &str,
    samples: &[Sample],
    split: &SplitFile,
    checkpoints: &[Checkpoint],
) -> Result<EvalReport, TrainError> {
    if checkpoints.len() != split.folds.len() {
        return Err(TrainError::Data(format!(
            "{} checkpoints for {} folds",
            checkpoints.len(),
            split.folds.len()
        )));
    }
    let metrics = split
        .folds
        .iter()
        .zip(checkpoints)
        .map(|(f, ck)| {
            let val: Vec<&Sample> = f.validation.iter().map(|&i| &samples[i]).collect();
            let feats = val
                .iter()
                .map(|s| apply_normalization(&s.features, &ck.norm_stats))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| TrainError::Data(e.to_string()))?;
            let meshes: Vec<&EdgeMesh> = val.iter().map(|s| &s.mesh).collect();
            let scores = predict(&ck.network, &meshes, &feats)?;
            let labels: Vec<Label> = val.iter().map(|s| s.label).collect();
            Ok(evaluate_fold(f.index, &scores, &labels)?)
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    Ok(build_report(name, metrics)?)
}

/// Per-fold AUC of thresholding the mean vertex curvedness, averaged over
/// the validation folds. Scores are mapped through `c / (1 + c)`, which
/// keeps the order and lands in `[0, 1)`.
pub fn curvedness_baseline(samples: &[Sample], split: &SplitFile) -> Result<(f64, f64), TrainError> {
    let scores: Vec<f64> = samples
        .par_iter()
        .map(|s| mean_curvedness(&s.mesh.mesh).map(|c| c / (1.0 + c)))
        .collect::<Result<_, _>>()
        .map_err(|e| TrainError::Data(e.to_string()))?;
    let curves = split
        .folds
        .iter()
        .map(|f| {
            let s: Vec<f64> = f.validation.iter().map(|&i| scores[i]).collect();
            let l: Vec<Label> = f.validation.iter().map(|&i| samples[i].label).collect();
            metrics::roc_curve(&s, &l)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(metrics::mean_auc(&curves)?)
}
