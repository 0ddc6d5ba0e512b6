//! Per-world class and label balancing.
//!
//! Every world is resampled to the same number of accepted and rejected
//! rows: the medians of those counts across worlds. Surplus rows are
//! deleted at random; deficits are filled with synthetic rows drawn from
//! the world's own same-label rows.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, tag};
use crate::tabular::{label_of, Dataset, TabularError};
use crate::worlds::{Partition, WorldKey};

#[derive(Debug, Error)]
pub enum BalanceError {
    #[error("partition has no rows")]
    EmptyPartition,
    #[error("median {label} count is zero; nothing to balance towards")]
    ZeroTarget { label: &'static str },
    #[error("world {world} has {count} {label} row(s); at least 2 are needed to oversample")]
    TooFewParents {
        world: WorldKey,
        label: &'static str,
        count: usize,
    },
    #[error("oversampling needs at least 2 parent rows, got {0}")]
    NotEnoughParents(usize),
    #[error("cannot keep {n_keep} of {available} rows")]
    KeepTooMany { n_keep: usize, available: usize },
    #[error("invalid resampling parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Tabular(#[from] TabularError),
}

/// Per-world row counts every world is resampled to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceTargets {
    pub target_accepted: usize,
    pub target_rejected: usize,
}

/// Oversampling hyperparameters.
///
/// `f` scales the difference vector between two neighbors added to the
/// parent; `cr` is the per-attribute probability that an attribute is
/// perturbed at all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoteParams {
    pub f: f64,
    pub cr: f64,
    pub k: usize,
    pub seed: u64,
}

impl Default for SmoteParams {
    fn default() -> Self {
        Self {
            f: 0.8,
            cr: 0.8,
            k: 5,
            seed: 0,
        }
    }
}

impl SmoteParams {
    pub fn validate(&self) -> Result<(), BalanceError> {
        if !(0.0..=1.0).contains(&self.f) {
            return Err(BalanceError::InvalidParams(format!(
                "f = {} not in [0, 1]",
                self.f
            )));
        }
        if !(0.0..=1.0).contains(&self.cr) {
            return Err(BalanceError::InvalidParams(format!(
                "cr = {} not in [0, 1]",
                self.cr
            )));
        }
        if self.k == 0 {
            return Err(BalanceError::InvalidParams("k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Which row positions take part in neighbor search and which are perturbed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResampleLayout {
    /// Normalized feature columns used for Euclidean distance.
    pub distance_columns: Vec<usize>,
    /// Numeric feature columns that crossover may perturb.
    pub numeric_columns: Vec<usize>,
}

impl ResampleLayout {
    pub fn for_dataset(data: &Dataset) -> Self {
        Self {
            distance_columns: data.feature_columns(),
            numeric_columns: data.numeric_feature_columns(),
        }
    }
}

/// Median with even-length lists averaged and rounded half up.
pub fn median_half_up(values: &[usize]) -> usize {
    assert!(!values.is_empty(), "median of an empty list");
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]).div_ceil(2)
    }
}

/// Counts of (rejected, accepted) rows per world, aligned with the partition.
pub fn label_counts(partition: &Partition, data: &Dataset) -> Vec<(usize, usize)> {
    partition
        .cells()
        .iter()
        .map(|cell| {
            let accepted = cell.iter().filter(|&&i| data.label(i) == 1).count();
            (cell.len() - accepted, accepted)
        })
        .collect()
}

/// Worlds of `partition` that hold no rows.
pub fn empty_worlds(partition: &Partition) -> Vec<WorldKey> {
    partition
        .iter()
        .filter(|(_, cell)| cell.is_empty())
        .map(|(w, _)| w.clone())
        .collect()
}

/// Medians of the accepted and rejected counts over the non-empty worlds.
///
/// Empty worlds take no part and stay empty after balancing. Fails when a
/// non-empty world would need oversampling for a label it holds fewer than
/// two rows of.
pub fn compute_targets(
    partition: &Partition,
    data: &Dataset,
) -> Result<BalanceTargets, BalanceError> {
    if partition.total_rows() == 0 {
        return Err(BalanceError::EmptyPartition);
    }
    let counts = label_counts(partition, data);
    let occupied = || counts.iter().filter(|c| c.0 + c.1 > 0);
    let rejected: Vec<usize> = occupied().map(|c| c.0).collect();
    let accepted: Vec<usize> = occupied().map(|c| c.1).collect();
    let targets = BalanceTargets {
        target_accepted: median_half_up(&accepted),
        target_rejected: median_half_up(&rejected),
    };
    if targets.target_accepted == 0 {
        return Err(BalanceError::ZeroTarget { label: "accepted" });
    }
    if targets.target_rejected == 0 {
        return Err(BalanceError::ZeroTarget { label: "rejected" });
    }
    for (world, &(rej, acc)) in partition.worlds().iter().zip(&counts) {
        if rej + acc == 0 {
            continue;
        }
        for (label, count, target) in [
            ("accepted", acc, targets.target_accepted),
            ("rejected", rej, targets.target_rejected),
        ] {
            if count < target && count < 2 {
                return Err(BalanceError::TooFewParents {
                    world: world.clone(),
                    label,
                    count,
                });
            }
        }
    }
    Ok(targets)
}

/// Generates `n_new` synthetic rows from `parents`.
///
/// Each row starts as a copy of a random parent `x1`. Two distinct members
/// `x2`, `x3` are drawn from the neighborhood formed by `x1` and its `k`
/// nearest parents; every numeric column is then, with probability `cr`,
/// replaced by `x1 + f * (x2 - x3)` clamped to [0, 1]. Everything else,
/// label and sensitive codes included, stays as in `x1`.
pub fn smote_sample(
    parents: &[Vec<f64>],
    n_new: usize,
    params: &SmoteParams,
    layout: &ResampleLayout,
) -> Result<Vec<Vec<f64>>, BalanceError> {
    params.validate()?;
    if parents.len() < 2 {
        return Err(BalanceError::NotEnoughParents(parents.len()));
    }
    let mut rng = rng::stream(params.seed, &[tag::OVERSAMPLE]);
    let mut neighborhoods: Vec<Option<Vec<usize>>> = vec![None; parents.len()];
    let mut out = Vec::with_capacity(n_new);
    for _ in 0..n_new {
        let p = rng.random_range(0..parents.len());
        let hood = neighborhoods[p]
            .get_or_insert_with(|| neighborhood(parents, p, params.k, &layout.distance_columns));
        let pick = index::sample(&mut rng, hood.len(), 2);
        let (a, b) = (&parents[hood[pick.index(0)]], &parents[hood[pick.index(1)]]);
        let mut child = parents[p].clone();
        for &c in &layout.numeric_columns {
            if rng.random::<f64>() < params.cr {
                child[c] = (child[c] + params.f * (a[c] - b[c])).clamp(0.0, 1.0);
            }
        }
        out.push(child);
    }
    Ok(out)
}

/// `p` followed by its `k` nearest other parents, ties broken by index.
fn neighborhood(parents: &[Vec<f64>], p: usize, k: usize, columns: &[usize]) -> Vec<usize> {
    let origin = &parents[p];
    let mut others: Vec<(f64, usize)> = parents
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != p)
        .map(|(i, row)| {
            let d2: f64 = columns.iter().map(|&c| (row[c] - origin[c]).powi(2)).sum();
            (d2, i)
        })
        .collect();
    let cmp = |x: &(f64, usize), y: &(f64, usize)| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1));
    let k = k.min(others.len());
    if k < others.len() {
        others.select_nth_unstable_by(k, cmp);
        others.truncate(k);
    }
    others.sort_unstable_by(cmp);
    std::iter::once(p)
        .chain(others.into_iter().map(|(_, i)| i))
        .collect()
}

/// Uniform random subset of size `n_keep`, kept in input order.
pub fn undersample(
    rows: &[Vec<f64>],
    n_keep: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, BalanceError> {
    Ok(undersample_indices(rows.len(), n_keep, seed)?
        .into_iter()
        .map(|i| rows[i].clone())
        .collect())
}

fn undersample_indices(n: usize, n_keep: usize, seed: u64) -> Result<Vec<usize>, BalanceError> {
    if n_keep > n {
        return Err(BalanceError::KeepTooMany {
            n_keep,
            available: n,
        });
    }
    let mut rng = rng::stream(seed, &[tag::UNDERSAMPLE]);
    let mut keep = index::sample(&mut rng, n, n_keep).into_vec();
    keep.sort_unstable();
    Ok(keep)
}

/// Resamples every world of `partition` to the targets computed from it.
///
/// Worlds run in parallel; each world's randomness comes from a seed
/// derived from `params.seed` and its key. Output rows are grouped by world
/// in partition order: surviving original rows in their original order,
/// then synthetic rejected rows, then synthetic accepted rows.
pub fn balance_all(
    data: &Dataset,
    partition: &Partition,
    params: &SmoteParams,
) -> Result<Dataset, BalanceError> {
    params.validate()?;
    let targets = compute_targets(partition, data)?;
    let layout = ResampleLayout::for_dataset(data);

    let per_world = partition
        .worlds()
        .par_iter()
        .zip(partition.cells().par_iter())
        .map(|(world, cell)| balance_world(data, world, cell, targets, params, &layout))
        .collect::<Result<Vec<_>, _>>()?;

    let rows = per_world.into_iter().flatten().collect();
    Ok(data.with_rows(rows)?)
}

fn balance_world(
    data: &Dataset,
    world: &WorldKey,
    cell: &[usize],
    targets: BalanceTargets,
    params: &SmoteParams,
    layout: &ResampleLayout,
) -> Result<Vec<Vec<f64>>, BalanceError> {
    if cell.is_empty() {
        return Ok(Vec::new());
    }
    let mut path = vec![tag::WORLD];
    path.extend(world.codes().iter().map(|&c| u64::from(c)));
    let world_seed = rng::derive_seed(params.seed, &path);

    let mut keep = Vec::with_capacity(cell.len());
    let mut synthetic = Vec::new();
    for (label, target) in [
        (0u8, targets.target_rejected),
        (1u8, targets.target_accepted),
    ] {
        let members: Vec<usize> = cell
            .iter()
            .copied()
            .filter(|&i| label_of(&data.rows()[i]) == label)
            .collect();
        let label_seed = rng::derive_seed(world_seed, &[u64::from(label)]);
        if members.len() >= target {
            let chosen = undersample_indices(members.len(), target, label_seed)?;
            keep.extend(chosen.into_iter().map(|j| members[j]));
        } else {
            keep.extend(&members);
            let parents: Vec<Vec<f64>> = members.iter().map(|&i| data.rows()[i].clone()).collect();
            let need = target - members.len();
            let made = smote_sample(&parents, need, &params.with_seed(label_seed), layout)
                .map_err(|e| match e {
                    BalanceError::NotEnoughParents(count) => BalanceError::TooFewParents {
                        world: world.clone(),
                        label: if label == 1 { "accepted" } else { "rejected" },
                        count,
                    },
                    other => other,
                })?;
            synthetic.extend(made);
        }
    }
    keep.sort_unstable();
    let mut rows: Vec<Vec<f64>> = keep.into_iter().map(|i| data.rows()[i].clone()).collect();
    rows.extend(synthetic);
    Ok(rows)
}
