//! Regression and spike-classification metrics, threshold sweeps,
//! correlation statistics, and feature-ablation attribution.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::FeatureFrame;
use crate::model::{design_matrix, predict_series_from_matrix, ModelConfig, Weights};

/// Confusion-matrix counts for spike classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Precision, recall, and their harmonic mean; zero when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    let sum_sq: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sum_sq / pred.len() as f64).sqrt())
}

/// Counts predicted spikes — `pred_vol >= threshold` with a positive realized
/// log-return — against ground-truth flags.
pub fn confusion_at_threshold(
    pred_vol: &[f64],
    realized_logret: &[f64],
    truth_flags: &[bool],
    threshold: f64,
) -> Result<ConfusionCounts> {
    if pred_vol.len() != realized_logret.len() || pred_vol.len() != truth_flags.len() {
        return Err(Error::LengthMismatch {
            left: pred_vol.len(),
            right: realized_logret.len().max(truth_flags.len()),
        });
    }
    let mut c = ConfusionCounts {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for i in 0..pred_vol.len() {
        let predicted = pred_vol[i] >= threshold && realized_logret[i] > 0.0;
        match (predicted, truth_flags[i]) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Precision `TP/(TP+FP)`, recall `TP/(TP+FN)`, and F1 `2PR/(P+R)`;
/// each is 0 when its denominator is 0.
pub fn spike_metrics(c: &ConfusionCounts) -> SpikeMetrics {
    let precision = if c.tp + c.fp > 0 {
        c.tp as f64 / (c.tp + c.fp) as f64
    } else {
        0.0
    };
    let recall = if c.tp + c.fn_ > 0 {
        c.tp as f64 / (c.tp + c.fn_) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    SpikeMetrics {
        precision,
        recall,
        f1,
    }
}

/// One row of a threshold sweep.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub metrics: SpikeMetrics,
}

/// Confusion counts and metrics across a list of prediction thresholds.
pub fn threshold_sweep(
    pred_vol: &[f64],
    realized_logret: &[f64],
    truth_flags: &[bool],
    thresholds: &[f64],
) -> Result<Vec<SweepRow>> {
    thresholds
        .iter()
        .map(|&t| {
            let counts = confusion_at_threshold(pred_vol, realized_logret, truth_flags, t)?;
            Ok(SweepRow {
                threshold: t,
                counts,
                metrics: spike_metrics(&counts),
            })
        })
        .collect()
}

/// Pearson r, its square, and Spearman rank correlation (average ranks for
/// ties).
pub fn correlation_stats(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::SeriesTooShort {
            need: 3,
            got: x.len(),
        });
    }
    let pearson = pearson_corr(x, y)?;
    let spearman = pearson_corr(&average_ranks(x), &average_ranks(y))?;
    Ok((pearson * pearson, pearson, spearman))
}

fn pearson_corr(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

/// 1-based ranks with ties receiving the average of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// One attribution entry: how much replacing a feature with its baseline
/// moves the mean prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationEntry {
    pub feature: String,
    pub score: f64,
}

/// Feature attribution, ranked by absolute score, largest first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub entries: Vec<AblationEntry>,
}

impl AblationReport {
    pub fn top(&self, k: usize) -> &[AblationEntry] {
        &self.entries[..k.min(self.entries.len())]
    }
}

/// Core ablation mechanics over an arbitrary prediction function: for each
/// feature, substitute the baseline column, re-predict, and record the mean
/// prediction shift.
pub fn ablation_scores(
    features: &Array2<f64>,
    feature_names: &[String],
    baseline: &[f64],
    mut predict: impl FnMut(&Array2<f64>) -> Result<Vec<f64>>,
) -> Result<AblationReport> {
    if baseline.len() != feature_names.len() || baseline.len() != features.ncols() {
        return Err(Error::LengthMismatch {
            left: baseline.len(),
            right: features.ncols(),
        });
    }
    let original = predict(features)?;
    let mut entries = Vec::with_capacity(feature_names.len());
    for (j, name) in feature_names.iter().enumerate() {
        let mut ablated = features.clone();
        ablated.column_mut(j).fill(baseline[j]);
        let shifted = predict(&ablated)?;
        let score = shifted
            .iter()
            .zip(&original)
            .map(|(s, o)| s - o)
            .sum::<f64>()
            / original.len() as f64;
        entries.push(AblationEntry {
            feature: name.clone(),
            score,
        });
    }
    entries.sort_by(|a, b| {
        b.score
            .abs()
            .partial_cmp(&a.score.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(AblationReport { entries })
}

/// Feature ablation for a trained model over all of the frame's evaluation
/// windows. `baseline[j]` replaces feature column `j`; scores are the mean
/// prediction shift, ranked by magnitude.
pub fn feature_ablation(
    cfg: &ModelConfig,
    weights: &Weights,
    frame: &FeatureFrame,
    baseline: &[f64],
) -> Result<AblationReport> {
    let dm = design_matrix(frame)?;
    let dates = frame.dates().to_vec();
    ablation_scores(&dm.features, &dm.feature_names, baseline, |features| {
        let series = predict_series_from_matrix(cfg, weights, features, &dates)?;
        Ok(series.predictions)
    })
}

/// Per-feature training-set means, the default ablation baseline.
pub fn feature_means(frame: &FeatureFrame) -> Result<Vec<f64>> {
    let dm = design_matrix(frame)?;
    Ok((0..dm.features.ncols())
        .map(|j| dm.features.column(j).sum() / dm.features.nrows() as f64)
        .collect())
}
