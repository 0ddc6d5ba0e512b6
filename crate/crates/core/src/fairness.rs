//! Counterfactual probing: situation testing, the alternate world index,
//! and confusion-matrix performance metrics.
//!
//! A row is *biased* under a model when moving it through every world
//! (rewriting only its sensitive codes) does not always yield the same
//! predicted label.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{fit, ClassifierModel, FitConfig, ModelError};
use crate::tabular::{Dataset, TabularError};
use crate::worlds::{SensitiveSpec, WorldBinding, WorldKey, WorldsError};

/// Scale applied to the raw index for reporting.
pub const AWI_REPORT_SCALE: f64 = 10.0;

#[derive(Debug, Error)]
pub enum FairnessError {
    #[error("no worlds to probe")]
    EmptyWorldList,
    #[error("cannot evaluate on an empty dataset")]
    EmptyDataset,
    #[error("situation testing removed every row")]
    AllRowsRemoved,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Worlds(#[from] WorldsError),
    #[error(transparent)]
    Tabular(#[from] TabularError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeResult {
    pub row_index: usize,
    /// One predicted label per probed world, in world order.
    pub predictions: Vec<u8>,
    pub is_biased: bool,
}

/// Predicts `row` in every world of `worlds`. The row itself is only read.
pub fn probe_point(
    model: &ClassifierModel,
    binding: &WorldBinding,
    row_index: usize,
    row: &[f64],
    worlds: &[WorldKey],
) -> Result<ProbeResult, FairnessError> {
    if worlds.is_empty() {
        return Err(FairnessError::EmptyWorldList);
    }
    let n_features = model.weights().len();
    if row.len() < n_features {
        return Err(ModelError::FeatureMismatch {
            expected: n_features,
            found: row.len(),
        }
        .into());
    }
    let mut scratch = row[..n_features].to_vec();
    let predictions: Vec<u8> = worlds
        .iter()
        .map(|w| {
            binding.substitute_in_place(&mut scratch, w);
            model.label_for(model.prob_unchecked(&scratch))
        })
        .collect();
    let is_biased = predictions.iter().any(|&p| p != predictions[0]);
    Ok(ProbeResult {
        row_index,
        predictions,
        is_biased,
    })
}

/// Indices of every biased row of `data`, ascending.
pub fn biased_rows(
    model: &ClassifierModel,
    data: &Dataset,
    binding: &WorldBinding,
    worlds: &[WorldKey],
) -> Result<Vec<usize>, FairnessError> {
    if worlds.is_empty() {
        return Err(FairnessError::EmptyWorldList);
    }
    model.check_dataset(data)?;
    let flags = data
        .rows()
        .par_iter()
        .enumerate()
        .map(|(i, row)| probe_point(model, binding, i, row, worlds).map(|p| p.is_biased))
        .collect::<Result<Vec<bool>, _>>()?;
    Ok(flags
        .into_iter()
        .enumerate()
        .filter_map(|(i, b)| b.then_some(i))
        .collect())
}

/// Count of biased rows over total rows, with the ×10 reporting scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AwiScore {
    pub biased_points: usize,
    pub total_points: usize,
    pub raw: f64,
    pub reported: f64,
}

impl AwiScore {
    pub fn new(biased_points: usize, total_points: usize) -> Self {
        let raw = biased_points as f64 / total_points as f64;
        Self {
            biased_points,
            total_points,
            raw,
            reported: AWI_REPORT_SCALE * raw,
        }
    }
}

/// Alternate world index of `model` on `test`.
pub fn compute_awi(
    model: &ClassifierModel,
    test: &Dataset,
    binding: &WorldBinding,
    worlds: &[WorldKey],
) -> Result<AwiScore, FairnessError> {
    if test.is_empty() {
        return Err(FairnessError::EmptyDataset);
    }
    let biased = biased_rows(model, test, binding, worlds)?;
    Ok(AwiScore::new(biased.len(), test.n_rows()))
}

/// Result of situation testing a training set.
#[derive(Debug, Clone)]
pub struct SituationTestOutcome {
    /// Input rows minus the biased ones, in input order.
    pub data: Dataset,
    /// Removed row indices of the input, ascending and unique.
    pub removed: Vec<usize>,
    /// The probe model fitted on the full input.
    pub probe_model: ClassifierModel,
}

/// Fits a model on `train`, probes every row of `train` in every world and
/// drops the rows whose prediction is not world-invariant.
///
/// Meant to run on an already balanced training set.
pub fn situation_test(
    train: &Dataset,
    spec: &SensitiveSpec,
    fit_config: &FitConfig,
) -> Result<SituationTestOutcome, FairnessError> {
    let binding = WorldBinding::new(spec, train)?;
    let worlds = spec.enumerate_worlds();
    let probe_model = fit(train, fit_config)?;
    let removed = biased_rows(&probe_model, train, &binding, &worlds)?;
    if removed.len() == train.n_rows() {
        return Err(FairnessError::AllRowsRemoved);
    }
    let data = if removed.is_empty() {
        train.clone()
    } else {
        let mut drop = removed.iter().peekable();
        let keep: Vec<usize> = (0..train.n_rows())
            .filter(|i| {
                if drop.peek() == Some(&i) {
                    drop.next();
                    false
                } else {
                    true
                }
            })
            .collect();
        train.subset(&keep)
    };
    Ok(SituationTestOutcome {
        data,
        removed,
        probe_model,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, truth: u8, predicted: u8) {
        match (truth, predicted) {
            (1, 1) => self.tp += 1,
            (0, 1) => self.fp += 1,
            (0, 0) => self.tn += 1,
            _ => self.fn_ += 1,
        }
    }
}

/// Ratios whose denominator was zero; those metrics are reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UndefinedRatios {
    pub accuracy: bool,
    pub precision: bool,
    pub recall: bool,
    pub false_alarm: bool,
    pub f1: bool,
}

impl UndefinedRatios {
    pub fn any(&self) -> bool {
        self.accuracy || self.precision || self.recall || self.false_alarm || self.f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub false_alarm: f64,
    pub f1: f64,
    pub confusion: Confusion,
    pub undefined: UndefinedRatios,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

impl PerformanceMetrics {
    /// Accuracy = (TP+TN)/all, precision = TP/(TP+FP), recall = TP/(TP+FN),
    /// false alarm = FP/(FP+TN), F1 = 2PR/(P+R).
    pub fn from_confusion(c: Confusion) -> Self {
        let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
        let (accuracy, u_acc) = ratio(tp + tn, tp + fp + tn + fn_);
        let (precision, u_prec) = ratio(tp, tp + fp);
        let (recall, u_rec) = ratio(tp, tp + fn_);
        let (false_alarm, u_fa) = ratio(fp, fp + tn);
        let (f1, u_f1) = ratio(2.0 * precision * recall, precision + recall);
        Self {
            accuracy,
            precision,
            recall,
            false_alarm,
            f1,
            confusion: c,
            undefined: UndefinedRatios {
                accuracy: u_acc,
                precision: u_prec,
                recall: u_rec,
                false_alarm: u_fa,
                f1: u_f1,
            },
        }
    }
}

pub fn compute_performance(
    model: &ClassifierModel,
    test: &Dataset,
) -> Result<PerformanceMetrics, FairnessError> {
    if test.is_empty() {
        return Err(FairnessError::EmptyDataset);
    }
    let predicted = model.predict_dataset(test)?;
    let mut confusion = Confusion::default();
    for (i, &p) in predicted.iter().enumerate() {
        confusion.record(test.label(i), p);
    }
    Ok(PerformanceMetrics::from_confusion(confusion))
}
