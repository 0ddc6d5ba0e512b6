//! Before/after experiments, synthetic biased data, and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance::{balance_all, BalanceError, SmoteParams};
use crate::fairness::{
    compute_awi, compute_performance, situation_test, AwiScore, Confusion, FairnessError,
    PerformanceMetrics,
};
use crate::model::{fit, FitConfig, ModelError};
use crate::rng::{self, tag};
use crate::tabular::{ColumnCodec, ColumnKind, ColumnSpec, Dataset, TabularError};
use crate::worlds::{partition_bound, SensitiveSpec, WorldBinding, WorldKey, WorldsError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSynthetic(String),
    #[error("repeat {repeat} failed during {stage}: {source}")]
    Repeat {
        repeat: usize,
        stage: &'static str,
        #[source]
        source: Box<StageError>,
    },
    #[error("report has no repeats")]
    EmptyReport,
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("report line {line}: {message}")]
    ParseReport { line: usize, message: String },
    #[error(transparent)]
    Worlds(#[from] WorldsError),
    #[error(transparent)]
    Tabular(#[from] TabularError),
}

impl HarnessError {
    /// Pipeline stage that failed, for diagnostics.
    pub fn stage(&self) -> &'static str {
        match self {
            Self::Repeat { stage, .. } => stage,
            Self::InvalidConfig(_) | Self::InvalidSynthetic(_) => "config",
            Self::EmptyReport | Self::Write { .. } => "report",
            Self::Read { .. } | Self::ParseReport { .. } => "report-parse",
            Self::Worlds(_) => "partition",
            Self::Tabular(_) => "dataset",
        }
    }
}

/// Failure inside one stage of a repeat.
#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Worlds(#[from] WorldsError),
    #[error("{0}")]
    Split(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub split_fraction: f64,
    pub repeats: usize,
    pub master_seed: u64,
    /// Balance the test set too in the after arm.
    pub repair_test: bool,
    pub smote: SmoteParams,
    pub fit: FitConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            split_fraction: 0.7,
            repeats: 10,
            master_seed: 0,
            repair_test: true,
            smote: SmoteParams::default(),
            fit: FitConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(HarnessError::InvalidConfig(format!(
                "split_fraction {} not in (0, 1)",
                self.split_fraction
            )));
        }
        if self.repeats == 0 {
            return Err(HarnessError::InvalidConfig(
                "repeats must be at least 1".into(),
            ));
        }
        self.smote
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        self.fit
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        rng::derive_seed(self.master_seed, &[tag::REPEAT, repeat as u64])
    }
}

/// Stratified split: each label class is shuffled and its first
/// `round(fraction · n_class)` rows go to training. Both index lists are
/// returned ascending.
pub fn stratified_split(data: &Dataset, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = rng::stream(seed, &[tag::SPLIT]);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in [0u8, 1] {
        let mut members: Vec<usize> = (0..data.n_rows())
            .filter(|&i| data.label(i) == label)
            .collect();
        members.shuffle(&mut rng);
        let n_train = (fraction * members.len() as f64).round() as usize;
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Test-set performance and fairness of one arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseResult {
    pub performance: PerformanceMetrics,
    pub awi: AwiScore,
}

/// Row counts along the after arm of one repeat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageCounts {
    pub train_rows: usize,
    pub test_rows: usize,
    pub balanced_train_rows: usize,
    pub removed_rows: usize,
    pub debiased_train_rows: usize,
    pub after_test_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub counts: StageCounts,
    pub before: PhaseResult,
    pub after: PhaseResult,
}

/// Per-phase medians of the reported numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedianRow {
    pub awi_raw: f64,
    pub awi_reported: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub false_alarm: f64,
    pub f1: f64,
}

impl MedianRow {
    pub const FIELDS: [&'static str; 7] = [
        "awi_raw",
        "awi_reported",
        "accuracy",
        "precision",
        "recall",
        "false_alarm",
        "f1",
    ];

    fn of_phase(p: &PhaseResult) -> [f64; 7] {
        [
            p.awi.raw,
            p.awi.reported,
            p.performance.accuracy,
            p.performance.precision,
            p.performance.recall,
            p.performance.false_alarm,
            p.performance.f1,
        ]
    }

    fn from_array(v: [f64; 7]) -> Self {
        Self {
            awi_raw: v[0],
            awi_reported: v[1],
            accuracy: v[2],
            precision: v[3],
            recall: v[4],
            false_alarm: v[5],
            f1: v[6],
        }
    }

    pub fn values(&self) -> [f64; 7] {
        [
            self.awi_raw,
            self.awi_reported,
            self.accuracy,
            self.precision,
            self.recall,
            self.false_alarm,
            self.f1,
        ]
    }

    /// Elementwise lower median over phases.
    pub fn lower_median<'a>(phases: impl IntoIterator<Item = &'a PhaseResult>) -> Self {
        let rows: Vec<[f64; 7]> = phases.into_iter().map(Self::of_phase).collect();
        let mut out = [0.0; 7];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut column: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            *slot = lower_median(&mut column);
        }
        Self::from_array(out)
    }
}

/// Lower median: the element at position `(n - 1) / 2` after sorting.
pub fn lower_median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty list");
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    pub config: ExperimentConfig,
    pub world_count: usize,
    pub repeats: Vec<RepeatResult>,
    pub median_before: MedianRow,
    pub median_after: MedianRow,
}

impl FairnessReport {
    pub fn from_repeats(
        config: ExperimentConfig,
        world_count: usize,
        repeats: Vec<RepeatResult>,
    ) -> Result<Self, HarnessError> {
        if repeats.is_empty() {
            return Err(HarnessError::EmptyReport);
        }
        Ok(Self {
            config,
            world_count,
            median_before: MedianRow::lower_median(repeats.iter().map(|r| &r.before)),
            median_after: MedianRow::lower_median(repeats.iter().map(|r| &r.after)),
            repeats,
        })
    }
}

/// Runs the before/after experiment `cfg.repeats` times and aggregates
/// medians. Repeats run in parallel; each is fully determined by its seed.
pub fn run_dualfair(
    data: &Dataset,
    cfg: &ExperimentConfig,
    spec: &SensitiveSpec,
) -> Result<FairnessReport, HarnessError> {
    cfg.validate()?;
    data.validate()?;
    let binding = WorldBinding::new(spec, data)?;
    let repeats = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| run_repeat(data, cfg, &binding, r))
        .collect::<Result<Vec<_>, _>>()?;
    FairnessReport::from_repeats(*cfg, spec.count_worlds(), repeats)
}

/// One repeat: split, evaluate the untouched arm, then balance and
/// situation-test the training data, refit, and evaluate again.
pub fn run_repeat(
    data: &Dataset,
    cfg: &ExperimentConfig,
    binding: &WorldBinding,
    repeat: usize,
) -> Result<RepeatResult, HarnessError> {
    let fail = |stage: &'static str| {
        move |e: StageError| HarnessError::Repeat {
            repeat,
            stage,
            source: Box::new(e),
        }
    };
    let spec = binding.spec();
    let worlds = spec.enumerate_worlds();
    let seed = cfg.repeat_seed(repeat);

    let (train_idx, test_idx) = stratified_split(data, cfg.split_fraction, seed);
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(fail("split")(StageError::Split(format!(
            "{} train / {} test rows",
            train_idx.len(),
            test_idx.len()
        ))));
    }
    let train = data.subset(&train_idx);
    let test = data.subset(&test_idx);

    let evaluate = |model, test: &Dataset| -> Result<PhaseResult, StageError> {
        Ok(PhaseResult {
            performance: compute_performance(model, test)?,
            awi: compute_awi(model, test, binding, &worlds)?,
        })
    };

    let raw_model = fit(&train, &cfg.fit).map_err(|e| fail("fit-before")(e.into()))?;
    let before = evaluate(&raw_model, &test).map_err(fail("evaluate-before"))?;

    let balanced = balance_all(
        &train,
        &partition_bound(&train, binding),
        &cfg.smote
            .with_seed(rng::derive_seed(seed, &[tag::BALANCE_TRAIN])),
    )
    .map_err(|e| fail("balance-train")(e.into()))?;
    let tested =
        situation_test(&balanced, spec, &cfg.fit).map_err(|e| fail("situation-test")(e.into()))?;
    let fair_model = fit(&tested.data, &cfg.fit).map_err(|e| fail("fit-after")(e.into()))?;

    let after_test = if cfg.repair_test {
        balance_all(
            &test,
            &partition_bound(&test, binding),
            &cfg.smote
                .with_seed(rng::derive_seed(seed, &[tag::BALANCE_TEST])),
        )
        .map_err(|e| fail("balance-test")(e.into()))?
    } else {
        test.clone()
    };
    let after = evaluate(&fair_model, &after_test).map_err(fail("evaluate-after"))?;

    Ok(RepeatResult {
        repeat,
        seed,
        counts: StageCounts {
            train_rows: train.n_rows(),
            test_rows: test.n_rows(),
            balanced_train_rows: balanced.n_rows(),
            removed_rows: tested.removed.len(),
            debiased_train_rows: tested.data.n_rows(),
            after_test_rows: after_test.n_rows(),
        },
        before,
        after,
    })
}

/// Balances then situation-tests `data`, returning the repaired rows and the
/// number of rows situation testing removed.
pub fn debias(
    data: &Dataset,
    spec: &SensitiveSpec,
    smote: &SmoteParams,
    fit_config: &FitConfig,
) -> Result<(Dataset, usize), HarnessError> {
    let binding = WorldBinding::new(spec, data)?;
    let fail = |stage: &'static str| {
        move |e: StageError| HarnessError::Repeat {
            repeat: 0,
            stage,
            source: Box::new(e),
        }
    };
    let balanced = balance_all(data, &partition_bound(data, &binding), smote)
        .map_err(|e| fail("balance")(e.into()))?;
    let tested = situation_test(&balanced, spec, fit_config)
        .map_err(|e| fail("situation-test")(e.into()))?;
    Ok((tested.data, tested.removed.len()))
}

/// Shape of a generated dataset with injected selection and label bias.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub spec: SensitiveSpec,
    pub feature_names: Vec<String>,
    pub label_name: String,
    /// (unfavorable, favorable) label strings; `None` writes 0/1.
    pub label_domain: Option<[String; 2]>,
    /// Relative sampling weight per world, in world order.
    pub selection_skew: Vec<f64>,
    /// Worlds whose favorable labels get flipped.
    pub unprivileged: Vec<WorldKey>,
    /// Probability that a favorable label in an unprivileged world becomes unfavorable.
    pub label_bias_strength: f64,
    /// Standard deviation of the Gaussian noise added to the latent score.
    pub noise: f64,
}

impl SyntheticSpec {
    /// Uniform skew, no label bias, features `f0..f{n-1}`, label `label`.
    pub fn new(n_rows: usize, spec: SensitiveSpec, n_features: usize) -> Self {
        let worlds = spec.count_worlds();
        Self {
            n_rows,
            feature_names: (0..n_features).map(|i| format!("f{i}")).collect(),
            label_name: "label".into(),
            label_domain: None,
            selection_skew: vec![1.0; worlds],
            unprivileged: default_unprivileged(&spec),
            spec,
            label_bias_strength: 0.0,
            noise: 0.25,
        }
    }

    /// Privileged worlds are sampled `ratio` times as often as unprivileged ones.
    pub fn with_skew_ratio(mut self, ratio: f64) -> Self {
        self.selection_skew = self
            .spec
            .enumerate_worlds()
            .iter()
            .map(|w| {
                if self.unprivileged.contains(w) {
                    1.0
                } else {
                    ratio
                }
            })
            .collect();
        self
    }

    pub fn with_label_bias(mut self, strength: f64) -> Self {
        self.label_bias_strength = strength;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidSynthetic(m));
        let worlds = self.spec.count_worlds();
        if self.feature_names.is_empty() {
            return bad("at least one feature is required".into());
        }
        if self.selection_skew.len() != worlds {
            return bad(format!(
                "{} skew weights for {} worlds",
                self.selection_skew.len(),
                worlds
            ));
        }
        if !self
            .selection_skew
            .iter()
            .all(|w| *w > 0.0 && w.is_finite())
        {
            return bad("skew weights must be positive".into());
        }
        if self.n_rows < 10 * worlds {
            return bad(format!(
                "need at least {} rows for {} worlds",
                10 * worlds,
                worlds
            ));
        }
        if !(0.0..=1.0).contains(&self.label_bias_strength) {
            return bad("label_bias_strength must lie in [0, 1]".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be non-negative".into());
        }
        if let Some(w) = self.unprivileged.iter().find(|w| !self.spec.admits(w)) {
            return bad(format!("unprivileged world {w} does not fit the spec"));
        }
        Ok(())
    }
}

/// Worlds whose first sensitive parameter is not at its first option.
pub fn default_unprivileged(spec: &SensitiveSpec) -> Vec<WorldKey> {
    spec.enumerate_worlds()
        .into_iter()
        .filter(|w| w.codes()[0] != 0)
        .collect()
}

/// Weights of the fair latent score, alternating in sign and decaying.
fn latent_weight(j: usize) -> f64 {
    let sign = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * 4.0 / (1.0 + 0.5 * j as f64)
}

/// Draws a dataset with selection bias (world frequencies follow
/// `selection_skew`) and label bias (favorable labels flipped in
/// unprivileged worlds).
///
/// Features of world `w` are Gaussian around 0.5 with a world-specific
/// spread and clamped to [0, 1]. The fair label is the sign of a fixed
/// linear score of the centered features plus noise; that score is
/// symmetric, so every world has the same fair favorable rate.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset, HarnessError> {
    spec.validate()?;
    let worlds = spec.spec.enumerate_worlds();
    let unprivileged: Vec<bool> = worlds
        .iter()
        .map(|w| spec.unprivileged.contains(w))
        .collect();
    let picker = WeightedIndex::new(&spec.selection_skew)
        .map_err(|e| HarnessError::InvalidSynthetic(e.to_string()))?;
    let n_sensitive = spec.spec.parameters().len();
    let n_features = spec.feature_names.len();

    let mut rng = rng::stream(seed, &[tag::SYNTH]);
    let mut rows = Vec::with_capacity(spec.n_rows);
    for _ in 0..spec.n_rows {
        let w = picker.sample(&mut rng);
        let spread = 0.12 + 0.08 * (w % 5) as f64 / 4.0;
        let mut row = Vec::with_capacity(n_sensitive + n_features + 1);
        row.extend(worlds[w].codes().iter().map(|&c| f64::from(c)));
        let mut score = 0.0;
        for j in 0..n_features {
            let z: f64 = rng.sample(StandardNormal);
            let x = (0.5 + spread * z).clamp(0.0, 1.0);
            score += latent_weight(j) * (x - 0.5);
            row.push(x);
        }
        let eps: f64 = rng.sample(StandardNormal);
        let flip: f64 = rng.random();
        let fair = score + spec.noise * eps > 0.0;
        let biased = fair && !(unprivileged[w] && flip < spec.label_bias_strength);
        row.push(if biased { 1.0 } else { 0.0 });
        rows.push(row);
    }

    let mut columns = Vec::new();
    let mut codecs = Vec::new();
    for p in spec.spec.parameters() {
        columns.push(ColumnSpec::categorical(
            &p.name,
            ColumnKind::Sensitive,
            p.options.clone(),
        ));
        codecs.push(ColumnCodec::SensitiveCode {
            values: p.options.clone(),
        });
    }
    for name in &spec.feature_names {
        columns.push(ColumnSpec::numeric_feature(name));
        codecs.push(ColumnCodec::Numeric { min: 0.0, max: 1.0 });
    }
    columns.push(ColumnSpec {
        name: spec.label_name.clone(),
        kind: ColumnKind::Label,
        domain: spec.label_domain.as_ref().map(|d| d.to_vec()),
    });
    codecs.push(ColumnCodec::Label {
        values: spec.label_domain.clone(),
    });
    Ok(Dataset::from_parts(columns, codecs, rows)?)
}

const RUNS_HEADER: &str =
    "seed,phase,awi_raw,awi_reported,accuracy,precision,recall,false_alarm,f1";
const SUMMARY_TAG: &str = "# dualfair report v1";
pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// One CSV line per repeat and phase.
pub fn render_runs_csv(report: &FairnessReport) -> String {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for r in &report.repeats {
        for (phase, p) in [("before", &r.before), ("after", &r.after)] {
            let v = MedianRow::of_phase(p);
            write!(out, "{},{phase}", r.seed).unwrap();
            for x in v {
                write!(out, ",{x:?}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

/// Flat `key = value` text holding everything needed to rebuild the report.
pub fn render_summary(report: &FairnessReport) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
    let c = &report.config;
    kv("config.split_fraction", format!("{:?}", c.split_fraction));
    kv("config.repeats", c.repeats.to_string());
    kv("config.master_seed", c.master_seed.to_string());
    kv("config.repair_test", c.repair_test.to_string());
    kv("config.smote.f", format!("{:?}", c.smote.f));
    kv("config.smote.cr", format!("{:?}", c.smote.cr));
    kv("config.smote.k", c.smote.k.to_string());
    kv("config.smote.seed", c.smote.seed.to_string());
    kv(
        "config.fit.learning_rate",
        format!("{:?}", c.fit.learning_rate),
    );
    kv("config.fit.max_epochs", c.fit.max_epochs.to_string());
    kv("config.fit.tolerance", format!("{:?}", c.fit.tolerance));
    kv("config.fit.l2", format!("{:?}", c.fit.l2));
    kv("config.fit.seed", c.fit.seed.to_string());
    kv("worlds", report.world_count.to_string());
    for (phase, m) in [
        ("before", &report.median_before),
        ("after", &report.median_after),
    ] {
        for (name, v) in MedianRow::FIELDS.iter().zip(m.values()) {
            kv(&format!("median.{phase}.{name}"), format!("{v:?}"));
        }
    }
    for r in &report.repeats {
        let p = format!("repeat.{}", r.repeat);
        kv(&format!("{p}.seed"), r.seed.to_string());
        let s = &r.counts;
        for (name, v) in [
            ("train_rows", s.train_rows),
            ("test_rows", s.test_rows),
            ("balanced_train_rows", s.balanced_train_rows),
            ("removed_rows", s.removed_rows),
            ("debiased_train_rows", s.debiased_train_rows),
            ("after_test_rows", s.after_test_rows),
        ] {
            kv(&format!("{p}.{name}"), v.to_string());
        }
        for (phase, ph) in [("before", &r.before), ("after", &r.after)] {
            let q = format!("{p}.{phase}");
            let cm = ph.performance.confusion;
            kv(&format!("{q}.tp"), cm.tp.to_string());
            kv(&format!("{q}.fp"), cm.fp.to_string());
            kv(&format!("{q}.tn"), cm.tn.to_string());
            kv(&format!("{q}.fn"), cm.fn_.to_string());
            kv(
                &format!("{q}.biased_points"),
                ph.awi.biased_points.to_string(),
            );
            kv(
                &format!("{q}.total_points"),
                ph.awi.total_points.to_string(),
            );
            for (name, v) in MedianRow::FIELDS.iter().zip(MedianRow::of_phase(ph)) {
                kv(&format!("{q}.{name}"), format!("{v:?}"));
            }
        }
    }
    format!("{SUMMARY_TAG}\n{out}")
}

/// Writes `runs.csv` and `summary.txt` into the directory `dir`, creating it
/// if needed.
pub fn write_report(report: &FairnessReport, dir: &Path) -> Result<(), HarnessError> {
    if report.repeats.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| HarnessError::Write { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let runs = dir.join(RUNS_FILE);
    fs::write(&runs, render_runs_csv(report)).map_err(io_err(&runs))?;
    let summary = dir.join(SUMMARY_FILE);
    fs::write(&summary, render_summary(report)).map_err(io_err(&summary))?;
    Ok(())
}

/// Reads back a report written by [`write_report`].
pub fn read_report(dir: &Path) -> Result<FairnessReport, HarnessError> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|source| HarnessError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_summary(&text)
}

/// Parses summary text. Per-repeat metrics are recomputed from the stored
/// counts and must agree with the stored values, as must the medians.
pub fn parse_summary(text: &str) -> Result<FairnessReport, HarnessError> {
    let perr = |line: usize, message: String| HarnessError::ParseReport { line, message };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == SUMMARY_TAG => {}
        _ => return Err(perr(1, "missing report tag".into())),
    }
    let mut map: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| perr(i + 1, "expected `key = value`".into()))?;
        if map.insert(k, (i + 1, v)).is_some() {
            return Err(perr(i + 1, format!("duplicate key `{k}`")));
        }
    }

    let mut fields = Fields { map, perr };
    let config = ExperimentConfig {
        split_fraction: fields.take("config.split_fraction")?,
        repeats: fields.take("config.repeats")?,
        master_seed: fields.take("config.master_seed")?,
        repair_test: fields.take("config.repair_test")?,
        smote: SmoteParams {
            f: fields.take("config.smote.f")?,
            cr: fields.take("config.smote.cr")?,
            k: fields.take("config.smote.k")?,
            seed: fields.take("config.smote.seed")?,
        },
        fit: FitConfig {
            learning_rate: fields.take("config.fit.learning_rate")?,
            max_epochs: fields.take("config.fit.max_epochs")?,
            tolerance: fields.take("config.fit.tolerance")?,
            l2: fields.take("config.fit.l2")?,
            seed: fields.take("config.fit.seed")?,
        },
    };
    let world_count: usize = fields.take("worlds")?;
    let mut medians = Vec::new();
    for phase in ["before", "after"] {
        let mut v = [0.0; 7];
        for (slot, name) in v.iter_mut().zip(MedianRow::FIELDS) {
            *slot = fields.take(&format!("median.{phase}.{name}"))?;
        }
        medians.push(MedianRow::from_array(v));
    }

    if config.repeats > 100_000 {
        return Err(perr(0, "implausible repeat count".into()));
    }
    let mut repeats = Vec::with_capacity(config.repeats);
    for r in 0..config.repeats {
        let p = format!("repeat.{r}");
        let seed = fields.take(&format!("{p}.seed"))?;
        let counts = StageCounts {
            train_rows: fields.take(&format!("{p}.train_rows"))?,
            test_rows: fields.take(&format!("{p}.test_rows"))?,
            balanced_train_rows: fields.take(&format!("{p}.balanced_train_rows"))?,
            removed_rows: fields.take(&format!("{p}.removed_rows"))?,
            debiased_train_rows: fields.take(&format!("{p}.debiased_train_rows"))?,
            after_test_rows: fields.take(&format!("{p}.after_test_rows"))?,
        };
        let mut phases = Vec::new();
        for phase in ["before", "after"] {
            let q = format!("{p}.{phase}");
            let confusion = Confusion {
                tp: fields.take(&format!("{q}.tp"))?,
                fp: fields.take(&format!("{q}.fp"))?,
                tn: fields.take(&format!("{q}.tn"))?,
                fn_: fields.take(&format!("{q}.fn"))?,
            };
            let biased: usize = fields.take(&format!("{q}.biased_points"))?;
            let total: usize = fields.take(&format!("{q}.total_points"))?;
            if total == 0 || biased > total {
                return Err(perr(0, format!("{q}: bad AWI counts {biased}/{total}")));
            }
            let result = PhaseResult {
                performance: PerformanceMetrics::from_confusion(confusion),
                awi: AwiScore::new(biased, total),
            };
            for (name, expected) in MedianRow::FIELDS.iter().zip(MedianRow::of_phase(&result)) {
                let key = format!("{q}.{name}");
                let stored: f64 = fields.take(&key)?;
                if stored.to_bits() != expected.to_bits() {
                    return Err(perr(0, format!("{key} disagrees with its counts")));
                }
            }
            phases.push(result);
        }
        repeats.push(RepeatResult {
            repeat: r,
            seed,
            counts,
            before: phases[0],
            after: phases[1],
        });
    }
    if let Some((k, (line, _))) = fields.map.iter().next() {
        return Err(perr(*line, format!("unexpected key `{k}`")));
    }
    let report = FairnessReport::from_repeats(config, world_count, repeats)?;
    let stored = (medians[0], medians[1]);
    let same = |a: &MedianRow, b: &MedianRow| {
        a.values()
            .iter()
            .zip(b.values())
            .all(|(x, y)| x.to_bits() == y.to_bits())
    };
    if !same(&stored.0, &report.median_before) || !same(&stored.1, &report.median_after) {
        return Err(perr(0, "stored medians disagree with the repeats".into()));
    }
    Ok(report)
}

struct Fields<'a, E> {
    map: BTreeMap<&'a str, (usize, &'a str)>,
    perr: E,
}

impl<'a, E: Fn(usize, String) -> HarnessError> Fields<'a, E> {
    fn take<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, HarnessError> {
        let (line, value) = self
            .map
            .remove(key)
            .ok_or_else(|| (self.perr)(0, format!("missing key `{key}`")))?;
        value
            .parse()
            .map_err(|_| (self.perr)(line, format!("cannot parse `{value}` for `{key}`")))
    }
}
