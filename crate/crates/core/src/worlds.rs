//! Sensitive parameters, counterfactual worlds, and world partitions.
//!
//! A world assigns one option to every sensitive parameter. Worlds are
//! ordered lexicographically by option code with the first parameter most
//! significant, so the position of a world in [`SensitiveSpec::enumerate_worlds`]
//! is its mixed-radix index.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tabular::{ColumnKind, Dataset};

#[derive(Debug, Error, PartialEq)]
pub enum WorldsError {
    #[error("invalid sensitive spec: {0}")]
    InvalidSpec(String),
    #[error("sensitive parameter `{0}` is not a sensitive column of the dataset")]
    UnknownParameter(String),
    #[error("options of `{0}` do not match the column domain")]
    DomainMismatch(String),
    #[error("world key {key} does not fit the spec")]
    BadKey { key: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitiveParameter {
    pub name: String,
    pub options: Vec<String>,
}

/// Ordered sensitive parameters, each with its ordered options.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SensitiveParameter>", into = "Vec<SensitiveParameter>")]
pub struct SensitiveSpec {
    parameters: Vec<SensitiveParameter>,
}

impl TryFrom<Vec<SensitiveParameter>> for SensitiveSpec {
    type Error = WorldsError;

    fn try_from(parameters: Vec<SensitiveParameter>) -> Result<Self, Self::Error> {
        Self::new(parameters)
    }
}

impl From<SensitiveSpec> for Vec<SensitiveParameter> {
    fn from(spec: SensitiveSpec) -> Self {
        spec.parameters
    }
}

impl SensitiveSpec {
    pub fn new(parameters: Vec<SensitiveParameter>) -> Result<Self, WorldsError> {
        if parameters.is_empty() {
            return Err(WorldsError::InvalidSpec("no sensitive parameters".into()));
        }
        let mut names = HashSet::new();
        for p in &parameters {
            if !names.insert(p.name.as_str()) {
                return Err(WorldsError::InvalidSpec(format!(
                    "parameter `{}` listed twice",
                    p.name
                )));
            }
            if p.options.len() < 2 {
                return Err(WorldsError::InvalidSpec(format!(
                    "parameter `{}` needs at least two options",
                    p.name
                )));
            }
            if p.options.iter().collect::<HashSet<_>>().len() != p.options.len() {
                return Err(WorldsError::InvalidSpec(format!(
                    "parameter `{}` has duplicate options",
                    p.name
                )));
            }
        }
        Ok(Self { parameters })
    }

    /// Convenience constructor from `(name, options)` pairs.
    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = (&'a str, &'a [&'a str])>,
    ) -> Result<Self, WorldsError> {
        Self::new(
            pairs
                .into_iter()
                .map(|(name, options)| SensitiveParameter {
                    name: name.to_string(),
                    options: options.iter().map(|o| o.to_string()).collect(),
                })
                .collect(),
        )
    }

    /// Race, sex and ethnicity with three options each, as found in US
    /// mortgage disclosure data.
    pub fn hmda() -> Self {
        Self::from_pairs([
            ("race", &["White", "Black", "Joint"][..]),
            ("sex", &["Male", "Female", "Joint"][..]),
            (
                "ethnicity",
                &["Not Hispanic or Latino", "Hispanic or Latino", "Joint"][..],
            ),
        ])
        .expect("static spec is valid")
    }

    pub fn parameters(&self) -> &[SensitiveParameter] {
        &self.parameters
    }

    pub fn option_counts(&self) -> Vec<usize> {
        self.parameters.iter().map(|p| p.options.len()).collect()
    }

    /// Number of worlds: the product of the per-parameter option counts.
    /// Every parameter multiplies the world grid; summing or taking a dot
    /// product of the counts would undercount it.
    pub fn count_worlds(&self) -> usize {
        self.parameters.iter().map(|p| p.options.len()).product()
    }

    /// Every world in lexicographic code order.
    pub fn enumerate_worlds(&self) -> Vec<WorldKey> {
        (0..self.count_worlds()).map(|i| self.world_at(i)).collect()
    }

    /// The world at lexicographic position `index`.
    pub fn world_at(&self, mut index: usize) -> WorldKey {
        let counts = self.option_counts();
        let mut codes = vec![0u16; counts.len()];
        for (slot, &k) in codes.iter_mut().zip(&counts).rev() {
            *slot = (index % k) as u16;
            index /= k;
        }
        WorldKey(codes)
    }

    /// Lexicographic position of `key`.
    pub fn world_index(&self, key: &WorldKey) -> Result<usize, WorldsError> {
        if !self.admits(key) {
            return Err(WorldsError::BadKey {
                key: key.to_string(),
            });
        }
        Ok(key
            .0
            .iter()
            .zip(self.option_counts())
            .fold(0, |acc, (&c, k)| acc * k + c as usize))
    }

    pub fn admits(&self, key: &WorldKey) -> bool {
        key.0.len() == self.parameters.len()
            && key
                .0
                .iter()
                .zip(&self.parameters)
                .all(|(&c, p)| (c as usize) < p.options.len())
    }

    /// Human-readable world name, e.g. `race=Black,sex=Male`.
    pub fn describe(&self, key: &WorldKey) -> String {
        key.0
            .iter()
            .zip(&self.parameters)
            .map(|(&c, p)| format!("{}={}", p.name, p.options[c as usize]))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// One option code per sensitive parameter, in spec order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WorldKey(pub Vec<u16>);

impl WorldKey {
    pub fn codes(&self) -> &[u16] {
        &self.0
    }
}

impl fmt::Display for WorldKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u16::to_string).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// A spec bound to the sensitive column positions of a dataset schema.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldBinding {
    spec: SensitiveSpec,
    columns: Vec<usize>,
}

impl WorldBinding {
    /// Binds `spec` to `data`. Every parameter must name a sensitive column
    /// whose domain equals the parameter's options.
    pub fn new(spec: &SensitiveSpec, data: &Dataset) -> Result<Self, WorldsError> {
        let columns = spec
            .parameters
            .iter()
            .map(|p| {
                let idx = data
                    .column_index(&p.name)
                    .filter(|&i| data.columns()[i].kind == ColumnKind::Sensitive)
                    .ok_or_else(|| WorldsError::UnknownParameter(p.name.clone()))?;
                if data.columns()[idx].domain.as_ref() != Some(&p.options) {
                    return Err(WorldsError::DomainMismatch(p.name.clone()));
                }
                Ok(idx)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            spec: spec.clone(),
            columns,
        })
    }

    pub fn spec(&self) -> &SensitiveSpec {
        &self.spec
    }

    /// Row positions of the sensitive columns, in spec order.
    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    /// The world a row currently belongs to.
    pub fn world_of(&self, row: &[f64]) -> WorldKey {
        WorldKey(self.columns.iter().map(|&c| row[c] as u16).collect())
    }

    pub fn world_index_of(&self, row: &[f64]) -> usize {
        self.columns
            .iter()
            .zip(&self.spec.parameters)
            .fold(0, |acc, (&c, p)| acc * p.options.len() + row[c] as usize)
    }

    /// Copy of `row` with its sensitive codes replaced by `key`'s codes.
    pub fn substitute_world(&self, row: &[f64], key: &WorldKey) -> Vec<f64> {
        let mut out = row.to_vec();
        self.substitute_in_place(&mut out, key);
        out
    }

    /// Overwrites the sensitive codes of `row` with `key`'s codes.
    pub fn substitute_in_place(&self, row: &mut [f64], key: &WorldKey) {
        for (&c, &code) in self.columns.iter().zip(&key.0) {
            row[c] = f64::from(code);
        }
    }
}

/// Row indices of a dataset grouped by world. Every world of the spec has a
/// cell, empty ones included.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    worlds: Vec<WorldKey>,
    cells: Vec<Vec<usize>>,
}

impl Partition {
    pub fn worlds(&self) -> &[WorldKey] {
        &self.worlds
    }

    /// Row indices per world, aligned with [`Partition::worlds`].
    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn iter(&self) -> impl Iterator<Item = (&WorldKey, &[usize])> {
        self.worlds.iter().zip(self.cells.iter().map(Vec::as_slice))
    }

    pub fn cell(&self, key: &WorldKey) -> Option<&[usize]> {
        self.worlds
            .iter()
            .position(|w| w == key)
            .map(|i| self.cells[i].as_slice())
    }

    pub fn len(&self) -> usize {
        self.worlds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.worlds.is_empty()
    }

    pub fn total_rows(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }
}

/// Splits `data` into one cell per world of `spec`.
pub fn partition(data: &Dataset, spec: &SensitiveSpec) -> Result<Partition, WorldsError> {
    let binding = WorldBinding::new(spec, data)?;
    Ok(partition_bound(data, &binding))
}

pub fn partition_bound(data: &Dataset, binding: &WorldBinding) -> Partition {
    let worlds = binding.spec.enumerate_worlds();
    let mut cells = vec![Vec::new(); worlds.len()];
    for (i, row) in data.rows().iter().enumerate() {
        cells[binding.world_index_of(row)].push(i);
    }
    Partition { worlds, cells }
}
