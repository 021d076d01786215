//! Confusion metrics with growing as the positive class, ROC/AUC, fold
//! aggregation and report files.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::train::Label;

/// Number of points of the common FPR grid used for mean ROC curves.
pub const ROC_GRID_POINTS: usize = 101;
pub const CSV_HEADER: &str = "Model,Accuracy,F1 score,Sensitivity,Specificity,AUC";
pub const ROC_AVERAGING: &str = "vertical: per-fold TPR linearly interpolated on a 101-point FPR grid, averaged pointwise";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no predictions to evaluate")]
    Empty,
    #[error("{0} predictions but {1} labels")]
    Length(usize, usize),
    #[error("score {0} is outside [0, 1]")]
    Score(f64),
    #[error("AUC is undefined when only one class is present")]
    SingleClass,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(pred: &[Label], labels: &[Label]) -> Self {
        let mut c = Self::default();
        for (&p, &y) in pred.iter().zip(labels) {
            match (y, p) {
                (Label::Growing, Label::Growing) => c.tp += 1,
                (Label::Growing, Label::Stable) => c.fn_ += 1,
                (Label::Stable, Label::Growing) => c.fp += 1,
                (Label::Stable, Label::Stable) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.fp + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub counts: ConfusionCounts,
    /// Some per-class F1, sensitivity or specificity had a zero denominator
    /// and was taken as 0.
    pub undefined: bool,
}

fn ratio(num: usize, den: usize, undefined: &mut bool) -> f64 {
    if den == 0 {
        *undefined = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(tp: usize, fp: usize, fn_: usize, undefined: &mut bool) -> f64 {
    ratio(2 * tp, 2 * tp + fp + fn_, undefined)
}

pub fn metrics_from_counts(c: ConfusionCounts) -> ConfusionMetrics {
    let mut undefined = false;
    let accuracy = ratio(c.tp + c.tn, c.total(), &mut undefined);
    let sensitivity = ratio(c.tp, c.tp + c.fn_, &mut undefined);
    let specificity = ratio(c.tn, c.tn + c.fp, &mut undefined);
    // the stable class's F1 swaps the roles of tp/tn and fp/fn
    let f1_growing = f1(c.tp, c.fp, c.fn_, &mut undefined);
    let f1_stable = f1(c.tn, c.fn_, c.fp, &mut undefined);
    ConfusionMetrics {
        accuracy,
        macro_f1: (f1_growing + f1_stable) / 2.0,
        sensitivity,
        specificity,
        counts: c,
        undefined,
    }
}

pub fn confusion_metrics(pred: &[Label], labels: &[Label]) -> Result<ConfusionMetrics, MetricsError> {
    if pred.len() != labels.len() {
        return Err(MetricsError::Length(pred.len(), labels.len()));
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    let m = metrics_from_counts(ConfusionCounts::from_predictions(pred, labels));
    if m.undefined {
        log::warn!("undefined per-class metric taken as 0 ({:?})", m.counts);
    }
    Ok(m)
}

/// Hard predictions from growing-class probabilities: argmax of the two
/// softmax outputs, so growing wins only above 0.5.
pub fn predict_labels(scores: &[f64]) -> Vec<Label> {
    scores
        .iter()
        .map(|&s| if s > 0.5 { Label::Growing } else { Label::Stable })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

impl RocCurve {
    /// TPR at `x`, linear between the surrounding points. On a vertical
    /// segment the highest TPR at that FPR is used.
    pub fn tpr_at(&self, x: f64) -> f64 {
        let i = self.fpr.partition_point(|&f| f <= x);
        if i == 0 {
            return self.tpr[0];
        }
        let j = i - 1;
        if self.fpr[j] == x || i == self.fpr.len() {
            return self.tpr[j];
        }
        let (x0, x1, y0, y1) = (self.fpr[j], self.fpr[i], self.tpr[j], self.tpr[i]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Threshold sweep over the unique scores in descending order; tied scores
/// form a single step. AUC by the trapezoid rule.
pub fn roc_curve(scores: &[f64], labels: &[Label]) -> Result<RocCurve, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::Length(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(&s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(MetricsError::Score(s));
    }
    let pos = labels.iter().filter(|&&l| l == Label::Growing).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut fpr, mut tpr) = (vec![0.0], vec![0.0]);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            match labels[order[k]] {
                Label::Growing => tp += 1,
                Label::Stable => fp += 1,
            }
            k += 1;
        }
        fpr.push(fp as f64 / neg as f64);
        tpr.push(tp as f64 / pos as f64);
    }
    let auc = fpr
        .windows(2)
        .zip(tpr.windows(2))
        .map(|(f, t)| (f[1] - f[0]) * (t[1] + t[0]) / 2.0)
        .sum();
    Ok(RocCurve { fpr, tpr, auc })
}

/// Population mean and standard deviation (divisor n).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn roc_grid() -> Vec<f64> {
    (0..ROC_GRID_POINTS)
        .map(|i| i as f64 / (ROC_GRID_POINTS - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRoc {
    pub fpr: Vec<f64>,
    pub tpr_mean: Vec<f64>,
    pub tpr_std: Vec<f64>,
}

pub fn mean_roc(curves: &[RocCurve]) -> Result<MeanRoc, MetricsError> {
    if curves.is_empty() {
        return Err(MetricsError::Empty);
    }
    let fpr = roc_grid();
    let mut tpr_mean = Vec::with_capacity(fpr.len());
    let mut tpr_std = Vec::with_capacity(fpr.len());
    for &x in &fpr {
        let vals: Vec<f64> = curves.iter().map(|c| c.tpr_at(x)).collect();
        let (m, s) = mean_std(&vals);
        tpr_mean.push(m);
        tpr_std.push(s);
    }
    Ok(MeanRoc { fpr, tpr_mean, tpr_std })
}

/// Mean and population std of the per-fold AUCs (not the AUC of the mean
/// curve).
pub fn mean_auc(curves: &[RocCurve]) -> Result<(f64, f64), MetricsError> {
    if curves.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(mean_std(&curves.iter().map(|c| c.auc).collect::<Vec<_>>()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub auc: f64,
    pub counts: ConfusionCounts,
    pub roc: RocCurve,
    /// Growing-class probability per validation sample.
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
}

pub fn evaluate_fold(fold: usize, scores: &[f64], labels: &[Label]) -> Result<FoldMetrics, MetricsError> {
    let m = confusion_metrics(&predict_labels(scores), labels)?;
    let roc = roc_curve(scores, labels)?;
    Ok(FoldMetrics {
        fold,
        accuracy: m.accuracy,
        macro_f1: m.macro_f1,
        sensitivity: m.sensitivity,
        specificity: m.specificity,
        auc: roc.auc,
        counts: m.counts,
        roc,
        scores: scores.to_vec(),
        labels: labels.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self { mean, std }
    }

    /// `0.704 (0.077)`
    pub fn formatted(&self) -> String {
        format!("{:.3} ({:.3})", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub accuracy: Summary,
    pub macro_f1: Summary,
    pub sensitivity: Summary,
    pub specificity: Summary,
    pub auc: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub folds: Vec<FoldMetrics>,
    pub aggregate: Aggregate,
    pub mean_roc: MeanRoc,
    pub roc_averaging: String,
}

pub fn build_report(model: &str, folds: Vec<FoldMetrics>) -> Result<EvalReport, MetricsError> {
    if folds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let pick = |f: fn(&FoldMetrics) -> f64| Summary::of(&folds.iter().map(f).collect::<Vec<_>>());
    let aggregate = Aggregate {
        accuracy: pick(|f| f.accuracy),
        macro_f1: pick(|f| f.macro_f1),
        sensitivity: pick(|f| f.sensitivity),
        specificity: pick(|f| f.specificity),
        auc: pick(|f| f.auc),
    };
    let curves: Vec<RocCurve> = folds.iter().map(|f| f.roc.clone()).collect();
    Ok(EvalReport {
        model: model.to_string(),
        mean_roc: mean_roc(&curves)?,
        folds,
        aggregate,
        roc_averaging: ROC_AVERAGING.to_string(),
    })
}

/// Writes `metrics.json` (all reports), `metrics.csv` (one row per model)
/// and `roc_points.csv` (mean ROC on the grid per model).
pub fn emit_report(reports: &[EvalReport], out: &Path) -> Result<(), MetricsError> {
    std::fs::create_dir_all(out)?;
    let mut json = serde_json::to_string_pretty(reports)?;
    json.push('\n');
    std::fs::write(out.join("metrics.json"), json)?;

    let mut csv = std::fs::File::create(out.join("metrics.csv"))?;
    writeln!(csv, "{CSV_HEADER}")?;
    for r in reports {
        let a = &r.aggregate;
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.model,
            a.accuracy.formatted(),
            a.macro_f1.formatted(),
            a.sensitivity.formatted(),
            a.specificity.formatted(),
            a.auc.formatted()
        )?;
    }

    let mut roc = csv::Writer::from_path(out.join("roc_points.csv"))?;
    roc.write_record(["model", "fpr", "tpr_mean", "tpr_std"])?;
    for r in reports {
        let m = &r.mean_roc;
        for i in 0..m.fpr.len() {
            roc.write_record([
                r.model.clone(),
                m.fpr[i].to_string(),
                m.tpr_mean[i].to_string(),
                m.tpr_std[i].to_string(),
            ])?;
        }
    }
    roc.flush()?;
    Ok(())
}

pub fn load_reports(path: &Path) -> Result<Vec<EvalReport>, MetricsError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
