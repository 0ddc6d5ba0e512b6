//! JSON run configuration shared by every CLI subcommand.
//!
//! ```json
//! {
//!   "columns": [
//!     {"name": "race", "kind": "sensitive", "domain": ["White", "Black", "Joint"]},
//!     {"name": "income", "kind": "feature"},
//!     {"name": "action_taken", "kind": "label", "domain": ["denied", "originated"]}
//!   ],
//!   "missing_threshold": 0.25,
//!   "missing_markers": ["", "Exempt", "NA"],
//!   "seed": 7,
//!   "smote": {"f": 0.8, "cr": 0.8, "k": 5},
//!   "experiment": {"split_fraction": 0.7, "repeats": 10, "repair_test": true}
//! }
//! ```
//!
//! `sensitive` may be given explicitly; otherwise it is read off the
//! sensitive columns in the order they are listed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance::SmoteParams;
use crate::harness::{ExperimentConfig, SyntheticSpec};
use crate::model::FitConfig;
use crate::tabular::{
    validate_schema, ColumnKind, ColumnSpec, TabularError, DEFAULT_MISSING_MARKERS,
    DEFAULT_MISSING_THRESHOLD,
};
use crate::worlds::{SensitiveParameter, SensitiveSpec, WorldKey, WorldsError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid schema: {0}")]
    Schema(#[from] TabularError),
    #[error("invalid sensitive spec: {0}")]
    Worlds(#[from] WorldsError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub split_fraction: f64,
    pub repeats: usize,
    pub repair_test: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let d = ExperimentConfig::default();
        Self {
            split_fraction: d.split_fraction,
            repeats: d.repeats,
            repair_test: d.repair_test,
        }
    }
}

/// Generator knobs for `synth`. Feature and label columns come from `columns`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub label_bias_strength: f64,
    /// Sampling weight of privileged worlds relative to unprivileged ones.
    pub skew_ratio: f64,
    /// Explicit per-world weights in world order; overrides `skew_ratio`.
    pub selection_skew: Option<Vec<f64>>,
    pub noise: f64,
    /// Unprivileged worlds as option names in `sensitive` order.
    pub unprivileged: Option<Vec<Vec<String>>>,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            label_bias_strength: 0.0,
            skew_ratio: 1.0,
            selection_skew: None,
            noise: 0.25,
            unprivileged: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub columns: Vec<ColumnSpec>,
    #[serde(default)]
    pub sensitive: Option<Vec<SensitiveParameter>>,
    #[serde(default = "default_threshold")]
    pub missing_threshold: f64,
    #[serde(default = "default_markers")]
    pub missing_markers: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub smote: SmoteSection,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub synthetic: SyntheticSection,
}

/// `smote` without its seed, which comes from the top-level `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoteSection {
    pub f: f64,
    pub cr: f64,
    pub k: usize,
}

impl Default for SmoteSection {
    fn default() -> Self {
        let d = SmoteParams::default();
        Self {
            f: d.f,
            cr: d.cr,
            k: d.k,
        }
    }
}

fn default_threshold() -> f64 {
    DEFAULT_MISSING_THRESHOLD
}

fn default_markers() -> Vec<String> {
    DEFAULT_MISSING_MARKERS
        .iter()
        .map(|s| s.to_string())
        .collect()
}

impl Config {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        validate_schema(&self.columns)?;
        if !(0.0..=1.0).contains(&self.missing_threshold) {
            return Err(ConfigError::Invalid(format!(
                "missing_threshold must be in [0, 1], got {}",
                self.missing_threshold
            )));
        }
        let spec = self.sensitive_spec()?;
        self.smote_params()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.experiment_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.unprivileged_worlds(&spec)?;
        Ok(())
    }

    /// Columns with the sensitive ones moved into `sensitive` order.
    pub fn schema(&self) -> Result<Vec<ColumnSpec>, ConfigError> {
        let spec = self.sensitive_spec()?;
        let mut out: Vec<ColumnSpec> = spec
            .parameters()
            .iter()
            .map(|p| {
                self.columns
                    .iter()
                    .find(|c| c.name == p.name)
                    .cloned()
                    .expect("checked by sensitive_spec")
            })
            .collect();
        out.extend(
            self.columns
                .iter()
                .filter(|c| c.kind != ColumnKind::Sensitive)
                .cloned(),
        );
        Ok(out)
    }

    pub fn sensitive_spec(&self) -> Result<SensitiveSpec, ConfigError> {
        let declared: Vec<&ColumnSpec> = self
            .columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Sensitive)
            .collect();
        let params = match &self.sensitive {
            None => declared
                .iter()
                .map(|c| SensitiveParameter {
                    name: c.name.clone(),
                    options: c.domain.clone().unwrap_or_default(),
                })
                .collect(),
            Some(params) => {
                if params.len() != declared.len() {
                    return Err(ConfigError::Invalid(format!(
                        "sensitive lists {} parameters but columns declare {} sensitive columns",
                        params.len(),
                        declared.len()
                    )));
                }
                for p in params {
                    let col = declared.iter().find(|c| c.name == p.name).ok_or_else(|| {
                        ConfigError::Invalid(format!(
                            "sensitive parameter {:?} is not a sensitive column",
                            p.name
                        ))
                    })?;
                    if col.domain.as_deref() != Some(&p.options[..]) {
                        return Err(ConfigError::Invalid(format!(
                            "options of {:?} differ from its column domain",
                            p.name
                        )));
                    }
                }
                params.clone()
            }
        };
        Ok(SensitiveSpec::new(params)?)
    }

    pub fn smote_params(&self) -> SmoteParams {
        SmoteParams {
            f: self.smote.f,
            cr: self.smote.cr,
            k: self.smote.k,
            seed: self.seed,
        }
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            split_fraction: self.experiment.split_fraction,
            repeats: self.experiment.repeats,
            master_seed: self.seed,
            repair_test: self.experiment.repair_test,
            smote: self.smote_params(),
            fit: self.fit,
        }
    }

    fn unprivileged_worlds(
        &self,
        spec: &SensitiveSpec,
    ) -> Result<Option<Vec<WorldKey>>, ConfigError> {
        let Some(lists) = &self.synthetic.unprivileged else {
            return Ok(None);
        };
        let params = spec.parameters();
        let mut out = Vec::with_capacity(lists.len());
        for names in lists {
            if names.len() != params.len() {
                return Err(ConfigError::Invalid(format!(
                    "unprivileged world {names:?} needs {} options",
                    params.len()
                )));
            }
            let codes = names
                .iter()
                .zip(params)
                .map(|(n, p)| {
                    p.options
                        .iter()
                        .position(|o| o == n)
                        .map(|i| i as u16)
                        .ok_or_else(|| {
                            ConfigError::Invalid(format!("{n:?} is not an option of {:?}", p.name))
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            out.push(WorldKey(codes));
        }
        Ok(Some(out))
    }

    /// Generator spec matching this schema. Feature columns must be numeric.
    pub fn synthetic_spec(&self, n_rows: usize) -> Result<SyntheticSpec, ConfigError> {
        let spec = self.sensitive_spec()?;
        let mut features = Vec::new();
        let mut label = None;
        for c in &self.columns {
            match c.kind {
                ColumnKind::Feature if c.domain.is_some() => {
                    return Err(ConfigError::Invalid(format!(
                        "synth only generates numeric features; {:?} is categorical",
                        c.name
                    )))
                }
                ColumnKind::Feature => features.push(c.name.clone()),
                ColumnKind::Label => label = Some(c),
                ColumnKind::Sensitive => {}
            }
        }
        let label = label.expect("schema has a label");
        let unprivileged = self.unprivileged_worlds(&spec)?;
        let mut s = SyntheticSpec::new(n_rows, spec, features.len());
        s.feature_names = features;
        s.label_name = label.name.clone();
        s.label_domain = label.domain.as_ref().map(|d| [d[0].clone(), d[1].clone()]);
        if let Some(u) = unprivileged {
            s.unprivileged = u;
        }
        s = s
            .with_skew_ratio(self.synthetic.skew_ratio)
            .with_label_bias(self.synthetic.label_bias_strength);
        if let Some(w) = &self.synthetic.selection_skew {
            s.selection_skew = w.clone();
        }
        s.noise = self.synthetic.noise;
        s.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(s)
    }
}
