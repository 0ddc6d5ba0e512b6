//! Binary logistic regression trained by full-batch gradient descent.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tabular::Dataset;

/// Rows per partial sum. Partial sums are always added in chunk order, so
/// results do not depend on the number of worker threads.
const CHUNK: usize = 2048;

const FORMAT_TAG: &str = "dualfair-logistic-v1";

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set holds only label {0}")]
    SingleClass(u8),
    #[error("loss became non-finite at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("expected {expected} features, got {found}")]
    FeatureMismatch { expected: usize, found: usize },
    #[error("feature names differ from the model's: `{expected}` vs `{found}`")]
    FeatureNames { expected: String, found: String },
    #[error("invalid fit config: {0}")]
    InvalidConfig(String),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("model text line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once the absolute change in loss between epochs drops below this.
    pub tolerance: f64,
    pub l2: f64,
    /// Weights start at zero and batches are never shuffled, so the seed has
    /// no effect on the result; it is kept for config echo.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_epochs: 2000,
            tolerance: 1e-8,
            l2: 1e-4,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if self.max_epochs == 0 {
            return Err(ModelError::InvalidConfig(
                "max_epochs must be at least 1".into(),
            ));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(ModelError::InvalidConfig("l2 must be non-negative".into()));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(ModelError::InvalidConfig(
                "tolerance must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    weights: Vec<f64>,
    bias: f64,
    feature_order: Vec<String>,
    threshold: f64,
}

impl ClassifierModel {
    pub fn new(
        feature_order: Vec<String>,
        weights: Vec<f64>,
        bias: f64,
        threshold: f64,
    ) -> Result<Self, ModelError> {
        if weights.len() != feature_order.len() {
            return Err(ModelError::Invalid(format!(
                "{} weights for {} features",
                weights.len(),
                feature_order.len()
            )));
        }
        if !weights.iter().all(|w| w.is_finite()) || !bias.is_finite() {
            return Err(ModelError::Invalid("non-finite parameter".into()));
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(ModelError::Invalid(format!(
                "threshold {threshold} not in [0, 1]"
            )));
        }
        Ok(Self {
            weights,
            bias,
            feature_order,
            threshold,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn feature_order(&self) -> &[String] {
        &self.feature_order
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Fails unless `data`'s classifier inputs are exactly this model's features.
    pub fn check_dataset(&self, data: &Dataset) -> Result<(), ModelError> {
        let names = data.feature_names();
        if names != self.feature_order {
            return Err(ModelError::FeatureNames {
                expected: self.feature_order.join(","),
                found: names.join(","),
            });
        }
        Ok(())
    }

    /// σ(w·x + b).
    pub fn predict_prob(&self, features: &[f64]) -> Result<f64, ModelError> {
        if features.len() != self.weights.len() {
            return Err(ModelError::FeatureMismatch {
                expected: self.weights.len(),
                found: features.len(),
            });
        }
        Ok(self.prob_unchecked(features))
    }

    /// 1 iff the probability reaches the threshold; ties go to 1.
    pub fn predict_label(&self, features: &[f64]) -> Result<u8, ModelError> {
        self.predict_prob(features).map(|p| self.label_for(p))
    }

    /// Labels for every row of `data`.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<u8>, ModelError> {
        self.check_dataset(data)?;
        Ok((0..data.n_rows())
            .into_par_iter()
            .map(|i| self.label_for(self.prob_unchecked(data.features(i))))
            .collect())
    }

    pub(crate) fn label_for(&self, prob: f64) -> u8 {
        u8::from(prob >= self.threshold)
    }

    pub(crate) fn prob_unchecked(&self, features: &[f64]) -> f64 {
        sigmoid(dot(&self.weights, features) + self.bias)
    }

    /// Line-oriented text form: a format tag, the threshold and bias, then
    /// one `weight<TAB>name<TAB>value` line per feature in order.
    pub fn to_text(&self) -> Result<String, ModelError> {
        let mut out = String::new();
        writeln!(out, "format\t{FORMAT_TAG}").unwrap();
        writeln!(out, "threshold\t{:?}", self.threshold).unwrap();
        writeln!(out, "bias\t{:?}", self.bias).unwrap();
        for (name, w) in self.feature_order.iter().zip(&self.weights) {
            if name.contains(['\t', '\n', '\r']) {
                return Err(ModelError::Invalid(format!(
                    "feature name {name:?} contains a tab or newline"
                )));
            }
            writeln!(out, "weight\t{name}\t{w:?}").unwrap();
        }
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self, ModelError> {
        let err = |line: usize, message: &str| ModelError::Parse {
            line,
            message: message.to_string(),
        };
        let num = |line: usize, s: &str| -> Result<f64, ModelError> {
            s.parse::<f64>()
                .map_err(|_| err(line, &format!("`{s}` is not a number")))
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l == format!("format\t{FORMAT_TAG}") => {}
            _ => return Err(err(1, "missing format tag")),
        }
        let mut threshold = None;
        let mut bias = None;
        let mut names = Vec::new();
        let mut weights = Vec::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                ["threshold", v] if threshold.is_none() => threshold = Some(num(n, v)?),
                ["bias", v] if bias.is_none() => bias = Some(num(n, v)?),
                ["weight", name, v] => {
                    names.push((*name).to_string());
                    weights.push(num(n, v)?);
                }
                _ => return Err(err(n, "unrecognized or repeated line")),
            }
        }
        let threshold = threshold.ok_or_else(|| err(0, "no threshold line"))?;
        let bias = bias.ok_or_else(|| err(0, "no bias line"))?;
        Self::new(names, weights, bias, threshold)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Value and gradient of the training objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub loss: f64,
    pub grad_weights: Vec<f64>,
    pub grad_bias: f64,
}

/// Mean logistic loss plus `l2 · ‖w‖² / 2` and its gradient.
///
/// Each row holds the features followed by the 0/1 label, the layout of a
/// [`Dataset`] row. The bias is not regularized.
pub fn objective(weights: &[f64], bias: f64, rows: &[Vec<f64>], l2: f64) -> Objective {
    let d = weights.len();
    let partials: Vec<(f64, Vec<f64>, f64)> = rows
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for row in chunk {
                let (x, y) = (&row[..d], row[d]);
                let z = dot(weights, x) + bias;
                loss += if y >= 0.5 { softplus(-z) } else { softplus(z) };
                let r = sigmoid(z) - y;
                for (g, xi) in gw.iter_mut().zip(x) {
                    *g += r * xi;
                }
                gb += r;
            }
            (loss, gw, gb)
        })
        .collect();

    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad_weights = vec![0.0; d];
    let mut grad_bias = 0.0;
    for (l, gw, gb) in partials {
        loss += l;
        for (g, p) in grad_weights.iter_mut().zip(gw) {
            *g += p;
        }
        grad_bias += gb;
    }
    let penalty: f64 = weights.iter().map(|w| w * w).sum::<f64>() * l2 / 2.0;
    for (g, w) in grad_weights.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    Objective {
        loss: loss / n + penalty,
        grad_weights,
        grad_bias: grad_bias / n,
    }
}

/// Loss per epoch and whether the tolerance stopped training early.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    pub losses: Vec<f64>,
    pub converged: bool,
}

pub fn fit(train: &Dataset, config: &FitConfig) -> Result<ClassifierModel, ModelError> {
    fit_traced(train, config).map(|(m, _)| m)
}

/// Per-feature centering and scaling used to precondition gradient steps.
#[derive(Debug, Clone, PartialEq)]
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn of(rows: &[Vec<f64>], d: usize) -> Self {
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for row in rows {
            for (m, x) in mean.iter_mut().zip(&row[..d]) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in rows {
            for ((v, x), m) in var.iter_mut().zip(&row[..d]).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }
}

/// Trains from zero weights, recording the loss at the start of each epoch.
///
/// Steps are taken in standardized coordinates `v_j = w_j · s_j`,
/// `c = b + Σ w_j · μ_j` (feature means `μ`, standard deviations `s`). This
/// is plain gradient descent on the same objective under a fixed linear
/// reparametrization, which keeps poorly scaled features from stalling it.
pub fn fit_traced(
    train: &Dataset,
    config: &FitConfig,
) -> Result<(ClassifierModel, FitTrace), ModelError> {
    config.validate()?;
    if train.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let (rejected, accepted) = train.label_counts();
    if accepted == 0 {
        return Err(ModelError::SingleClass(0));
    }
    if rejected == 0 {
        return Err(ModelError::SingleClass(1));
    }

    let d = train.label_index();
    let st = Standardizer::of(train.rows(), d);
    let mut v = vec![0.0; d];
    let mut c = 0.0;
    let to_original = |v: &[f64], c: f64| {
        let w: Vec<f64> = v.iter().zip(&st.scale).map(|(vj, s)| vj / s).collect();
        let b = c - w.iter().zip(&st.mean).map(|(wj, m)| wj * m).sum::<f64>();
        (w, b)
    };

    let mut losses: Vec<f64> = Vec::new();
    let mut converged = false;
    for epoch in 0..config.max_epochs {
        let (weights, bias) = to_original(&v, c);
        let obj = objective(&weights, bias, train.rows(), config.l2);
        if !obj.loss.is_finite() {
            return Err(ModelError::Diverged { epoch });
        }
        if let Some(&prev) = losses.last() {
            if (prev - obj.loss).abs() < config.tolerance {
                losses.push(obj.loss);
                converged = true;
                break;
            }
        }
        losses.push(obj.loss);
        for (j, vj) in v.iter_mut().enumerate() {
            let grad_v = (obj.grad_weights[j] - st.mean[j] * obj.grad_bias) / st.scale[j];
            *vj -= config.learning_rate * grad_v;
        }
        c -= config.learning_rate * obj.grad_bias;
    }
    let (weights, bias) = to_original(&v, c);
    if !weights.iter().all(|w| w.is_finite()) || !bias.is_finite() {
        return Err(ModelError::Diverged {
            epoch: losses.len(),
        });
    }
    let model = ClassifierModel::new(train.feature_names(), weights, bias, 0.5)?;
    Ok((model, FitTrace { losses, converged }))
}
